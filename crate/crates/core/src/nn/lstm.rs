//! Stacked LSTM with forget, input, output and candidate gates.
//!
//! ```text
//! f = σ(.)  i = σ(.)  o = σ(.)  g = tanh(.)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use super::{add_into, add_matvec, add_matvec_t, add_outer, affine, sigmoid, Gradients, NetworkParams};

const PER_LAYER: usize = 12;

#[derive(Debug, Clone)]
struct Step {
    f: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    inputs: Vec<Vec<f64>>,
    /// `steps[l][t]`
    steps: Vec<Vec<Step>>,
}

impl LstmTrace {
    pub(crate) fn cell_states(&self) -> Vec<Vec<Vec<f64>>> {
        self.steps
            .iter()
            .map(|layer| layer.iter().map(|s| s.c.clone()).collect())
            .collect()
    }
}

fn gate(params: &NetworkParams, layer: usize, gate: usize) -> (&[f64], &[f64], &[f64]) {
    let base = PER_LAYER * layer + 3 * gate;
    (params.slice(base), params.slice(base + 1), params.slice(base + 2))
}

pub(crate) fn forward(params: &NetworkParams, window: &[f64]) -> ([f64; 2], LstmTrace) {
    let config = params.config();
    let inputs: Vec<Vec<f64>> = window.chunks(config.input_dim).map(<[f64]>::to_vec).collect();
    let mut steps: Vec<Vec<Step>> = Vec::with_capacity(config.hidden_dims.len());
    for (l, &h) in config.hidden_dims.iter().enumerate() {
        let mut layer = Vec::with_capacity(inputs.len());
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in 0..inputs.len() {
            let x: &[f64] = if l == 0 { &inputs[t] } else { &steps[l - 1][t].h };
            let pre = |k: usize| {
                let (wx, wh, b) = gate(params, l, k);
                let mut z = Vec::new();
                affine(wx, b, x, &mut z);
                add_matvec(wh, &h_prev, &mut z);
                z
            };
            let f: Vec<f64> = pre(0).into_iter().map(sigmoid).collect();
            let i: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
            let o: Vec<f64> = pre(2).into_iter().map(sigmoid).collect();
            let g: Vec<f64> = pre(3).into_iter().map(f64::tanh).collect();
            let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let hs: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
            h_prev.clone_from(&hs);
            c_prev.clone_from(&c);
            layer.push(Step { f, i, o, g, c, tanh_c, h: hs });
        }
        steps.push(layer);
    }
    let n = steps.len();
    let top = &steps[n - 1].last().expect("window_len >= 1").h;
    let mut out = Vec::new();
    affine(params.slice(PER_LAYER * n), params.slice(PER_LAYER * n + 1), top, &mut out);
    ([out[0], out[1]], LstmTrace { inputs, steps })
}

pub(crate) fn backward(params: &NetworkParams, trace: &LstmTrace, dy: [f64; 2], grads: &mut Gradients) {
    let layout = params.layout();
    let n = trace.steps.len();
    let steps = trace.inputs.len();
    let head = PER_LAYER * n;
    let top = &trace.steps[n - 1][steps - 1].h;
    add_outer(&dy, top, grads.slice_mut(layout, head));
    add_into(&dy, grads.slice_mut(layout, head + 1));

    let mut from_above = vec![vec![0.0; top.len()]; steps];
    add_matvec_t(params.slice(head), &dy, &mut from_above[steps - 1]);

    for l in (0..n).rev() {
        let layer = &trace.steps[l];
        let width = layer[0].h.len();
        let in_width = if l == 0 { trace.inputs[0].len() } else { trace.steps[l - 1][0].h.len() };
        let mut to_below = vec![vec![0.0; in_width]; steps];
        let mut dh_next = vec![0.0; width];
        let mut dc_next = vec![0.0; width];
        for t in (0..steps).rev() {
            let s = &layer[t];
            let x: &[f64] = if l == 0 { &trace.inputs[t] } else { &trace.steps[l - 1][t].h };
            let zero = vec![0.0; width];
            let (h_prev, c_prev) = if t > 0 { (&layer[t - 1].h, &layer[t - 1].c) } else { (&zero, &zero) };

            let mut dz = [vec![0.0; width], vec![0.0; width], vec![0.0; width], vec![0.0; width]];
            for k in 0..width {
                let dh = from_above[t][k] + dh_next[k];
                let dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
                let d_o = dh * s.tanh_c[k];
                let d_f = dc * c_prev[k];
                let d_i = dc * s.g[k];
                let d_g = dc * s.i[k];
                dz[0][k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[1][k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[2][k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dz[3][k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dc_next[k] = dc * s.f[k];
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (k, d) in dz.iter().enumerate() {
                let base = PER_LAYER * l + 3 * k;
                let (wx, wh, _) = gate(params, l, k);
                add_outer(d, x, grads.slice_mut(layout, base));
                add_outer(d, h_prev, grads.slice_mut(layout, base + 1));
                add_into(d, grads.slice_mut(layout, base + 2));
                if l > 0 {
                    add_matvec_t(wx, d, &mut to_below[t]);
                }
                add_matvec_t(wh, d, &mut dh_next);
            }
        }
        from_above = to_below;
    }
}
