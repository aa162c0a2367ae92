//! Stacked Elman network, `h_t = tanh(Wx x_t + Wh h_{t-1} + b)`, with the
//! heads reading the top layer's final state.

use super::{add_into, add_matvec, add_matvec_t, add_outer, affine, Gradients, NetworkParams};

#[derive(Debug, Clone)]
pub(crate) struct RnnTrace {
    /// Per-step input rows.
    inputs: Vec<Vec<f64>>,
    /// `hidden[l][t]`
    hidden: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn forward(params: &NetworkParams, window: &[f64]) -> ([f64; 2], RnnTrace) {
    let config = params.config();
    let inputs: Vec<Vec<f64>> = window.chunks(config.input_dim).map(<[f64]>::to_vec).collect();
    let mut hidden: Vec<Vec<Vec<f64>>> = Vec::with_capacity(config.hidden_dims.len());
    for (l, &h) in config.hidden_dims.iter().enumerate() {
        let (wx, wh, b) = (params.slice(3 * l), params.slice(3 * l + 1), params.slice(3 * l + 2));
        let below: &[Vec<f64>] = if l == 0 { &inputs } else { &hidden[l - 1] };
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(below.len());
        let mut prev = vec![0.0; h];
        for x in below {
            let mut z = Vec::new();
            affine(wx, b, x, &mut z);
            add_matvec(wh, &prev, &mut z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            prev.clone_from(&z);
            states.push(z);
        }
        hidden.push(states);
    }
    let n = config.hidden_dims.len();
    let top = hidden[n - 1].last().expect("window_len >= 1");
    let mut out = Vec::new();
    affine(params.slice(3 * n), params.slice(3 * n + 1), top, &mut out);
    ([out[0], out[1]], RnnTrace { inputs, hidden })
}

pub(crate) fn backward(params: &NetworkParams, trace: &RnnTrace, dy: [f64; 2], grads: &mut Gradients) {
    let layout = params.layout();
    let n = trace.hidden.len();
    let steps = trace.inputs.len();
    let top = trace.hidden[n - 1].last().expect("window_len >= 1");
    add_outer(&dy, top, grads.slice_mut(layout, 3 * n));
    add_into(&dy, grads.slice_mut(layout, 3 * n + 1));

    // Gradient arriving at each step's output of the current layer.
    let mut from_above = vec![vec![0.0; top.len()]; steps];
    add_matvec_t(params.slice(3 * n), &dy, &mut from_above[steps - 1]);

    for l in (0..n).rev() {
        let (wx, wh) = (params.slice(3 * l), params.slice(3 * l + 1));
        let states = &trace.hidden[l];
        let below: &[Vec<f64>] = if l == 0 { &trace.inputs } else { &trace.hidden[l - 1] };
        let width = states[0].len();
        let mut to_below = vec![vec![0.0; below[0].len()]; steps];
        let mut carry = vec![0.0; width];
        for t in (0..steps).rev() {
            let dz: Vec<f64> = from_above[t]
                .iter()
                .zip(&carry)
                .zip(&states[t])
                .map(|((a, c), h)| (a + c) * (1.0 - h * h))
                .collect();
            add_outer(&dz, &below[t], grads.slice_mut(layout, 3 * l));
            if t > 0 {
                add_outer(&dz, &states[t - 1], grads.slice_mut(layout, 3 * l + 1));
            }
            add_into(&dz, grads.slice_mut(layout, 3 * l + 2));
            if l > 0 {
                add_matvec_t(wx, &dz, &mut to_below[t]);
            }
            carry.iter_mut().for_each(|c| *c = 0.0);
            add_matvec_t(wh, &dz, &mut carry);
        }
        from_above = to_below;
    }
}
