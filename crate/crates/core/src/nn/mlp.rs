//! Fully connected network over the flattened window. Hidden layers use
//! `tanh`, the head is affine.

use super::{add_into, add_matvec_t, add_outer, affine, Gradients, NetworkParams};

#[derive(Debug, Clone)]
pub(crate) struct MlpTrace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

pub(crate) fn forward(params: &NetworkParams, window: &[f64]) -> ([f64; 2], MlpTrace) {
    let n_layers = params.config().hidden_dims.len() + 1;
    let mut acts = Vec::with_capacity(n_layers + 1);
    acts.push(window.to_vec());
    for l in 0..n_layers {
        let mut z = Vec::new();
        affine(params.slice(2 * l), params.slice(2 * l + 1), &acts[l], &mut z);
        if l + 1 < n_layers {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    let out = acts[n_layers].as_slice();
    ([out[0], out[1]], MlpTrace { acts })
}

pub(crate) fn backward(params: &NetworkParams, trace: &MlpTrace, dy: [f64; 2], grads: &mut Gradients) {
    let layout = params.layout();
    let n_layers = trace.acts.len() - 1;
    let mut delta = dy.to_vec();
    for l in (0..n_layers).rev() {
        if l + 1 < n_layers {
            for (d, a) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                *d *= 1.0 - a * a;
            }
        }
        add_outer(&delta, &trace.acts[l], grads.slice_mut(layout, 2 * l));
        add_into(&delta, grads.slice_mut(layout, 2 * l + 1));
        if l > 0 {
            let mut prev = vec![0.0; trace.acts[l].len()];
            add_matvec_t(params.slice(2 * l), &delta, &mut prev);
            delta = prev;
        }
    }
}
