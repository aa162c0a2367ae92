use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.values.len() != params.len() || state.m.len() != params.len() {
        return domain("Adam state, gradients and parameters must share a layout");
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let values = params.values_mut();
    for k in 0..values.len() {
        let g = grads.values[k];
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g;
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Arch, NetworkConfig};

    fn tiny() -> NetworkParams {
        let c = NetworkConfig {
            window_len: 1,
            input_dim: 1,
            ..NetworkConfig::new(Arch::Mlp, vec![])
        };
        init_params(&c, 3, 0.5).unwrap()
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = tiny();
        let before = p.values().to_vec();
        let mut s = AdamState::new(&p, AdamConfig::default());
        let g = Gradients::zeros_like(&p);
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.values(), before.as_slice());
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn constant_unit_gradient_moves_by_lr() {
        let mut p = tiny();
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        let mut s = AdamState::new(&p, cfg);
        let g = Gradients { values: vec![1.0; p.len()] };
        // Scalar iteration of the moment recursions, independent of the
        // implementation's vector loop.
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut prev = p.values()[0];
        for t in 1..=200 {
            adam_step(&mut p, &g, &mut s).unwrap();
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            let expect = 0.01 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            let moved = prev - p.values()[0];
            assert!((moved - expect).abs() < 1e-15);
            prev = p.values()[0];
        }
        // Both bias-corrected moments are exactly 1 here, so the step is lr.
        adam_step(&mut p, &g, &mut s).unwrap();
        assert!(((prev - p.values()[0]) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = tiny();
            let mut s = AdamState::new(&p, AdamConfig::default());
            let g = Gradients {
                values: (0..p.len()).map(|k| (k as f64 * 0.37).sin()).collect(),
            };
            for _ in 0..10 {
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn layout_mismatch_errors() {
        let mut p = tiny();
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &Gradients { values: vec![0.0; 1] }, &mut s).is_err());
    }
}
