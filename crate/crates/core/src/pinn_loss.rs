//! Composite loss: SOC data misfit plus fractional-physics residuals on the
//! network's own SOC and polarization predictions.
//!
//! ```text
//! r_dyn(t) = D^α soc(t) + η I(t) / C_n
//! r_pol(t) = C_p D^α u_p(t) + u_p(t) / R_p - I(t)
//! L_total  = L_data + λ (mean r_dyn² + mean r_pol²)
//! ```
//!
//! `D^α` is the truncated GL derivative taken about the cycle's initial state,
//! the same discretization the simulator steps with, so simulated traces are
//! exact zeros of both residuals.

use serde::{Deserialize, Serialize};

use crate::battery_model::BatteryParams;
use crate::error::{domain, Result};
use crate::frac_calc::{gl_derivative, GlWeights, HistoryBuffer};

/// Physical constants and the GL discretization used by the residuals.
#[derive(Debug, Clone)]
pub struct PhysicsConfig {
    pub params: BatteryParams,
    memory_len: usize,
    t_s: f64,
    weights: GlWeights,
}

impl PhysicsConfig {
    pub fn new(params: BatteryParams, memory_len: usize, t_s: f64) -> Result<Self> {
        params.validate()?;
        if !(t_s.is_finite() && t_s > 0.0) {
            return domain(format!("sample step {t_s} must be positive"));
        }
        let weights = GlWeights::new(params.alpha, memory_len)?;
        Ok(Self {
            params,
            memory_len,
            t_s,
            weights,
        })
    }

    pub fn memory_len(&self) -> usize {
        self.memory_len
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn weights(&self) -> &GlWeights {
        &self.weights
    }

    fn check_step(&self, history: &HistoryBuffer) -> Result<()> {
        if (history.step() - self.t_s).abs() > 1e-12 * self.t_s {
            return domain(format!(
                "history step {} differs from physics step {}",
                history.step(),
                self.t_s
            ));
        }
        Ok(())
    }

    /// `dr/dx(t-j)` for the dynamics residual.
    fn dyn_coeffs(&self) -> Vec<f64> {
        let s = self.weights.step_scale(self.t_s);
        self.weights.as_slice().iter().map(|w| w * s).collect()
    }

    /// `dr/du_p(t-j)` for the polarization residual.
    fn pol_coeffs(&self) -> Vec<f64> {
        let p = &self.params;
        let mut c: Vec<f64> = self.dyn_coeffs().iter().map(|k| p.cp * k).collect();
        c[0] += 1.0 / p.rp;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
}

impl LossWeights {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return domain(format!("lambda {lambda} must be finite and non-negative"));
        }
        Ok(Self { lambda })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_data: f64,
    pub l_dyn: f64,
    pub l_pol: f64,
    pub l_phy: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn from_parts(l_data: f64, l_dyn: f64, l_pol: f64, lw: LossWeights) -> Self {
        let l_phy = l_dyn + l_pol;
        let l_total = if lw.lambda == 0.0 {
            l_data
        } else {
            l_data + lw.lambda * l_phy
        };
        Self {
            l_data,
            l_dyn,
            l_pol,
            l_phy,
            l_total,
        }
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("l_data", self.l_data),
            ("l_dyn", self.l_dyn),
            ("l_pol", self.l_pol),
            ("l_total", self.l_total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Mean squared SOC error.
pub fn data_loss(soc_pred: &[f64], soc_true: &[f64]) -> Result<f64> {
    if soc_pred.is_empty() || soc_pred.len() != soc_true.len() {
        return domain(format!(
            "data loss needs equal non-empty lengths, got {} and {}",
            soc_pred.len(),
            soc_true.len()
        ));
    }
    let sum: f64 = soc_pred.iter().zip(soc_true).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / soc_pred.len() as f64)
}

/// SOC dynamics residual at the newest sample of `history`.
pub fn dynamics_residual(history: &HistoryBuffer, current: f64, cfg: &PhysicsConfig) -> Result<f64> {
    cfg.check_step(history)?;
    let p = &cfg.params;
    Ok(gl_derivative(history, &cfg.weights)? + p.eta * current / p.capacity_c_n)
}

/// Polarization residual at the newest sample of `history`.
pub fn polarization_residual(history: &HistoryBuffer, current: f64, cfg: &PhysicsConfig) -> Result<f64> {
    cfg.check_step(history)?;
    let p = &cfg.params;
    let up = history.newest().expect("gl_derivative rejects empty histories");
    Ok(p.cp * gl_derivative(history, &cfg.weights)? + up / p.rp - current)
}

/// Consecutive network predictions over part of one cycle.
///
/// Index `k` of `soc_pred`, `up_pred` and `currents` refers to the same time
/// step. `soc_true` labels the *last* `soc_true.len()` steps. Residuals are
/// formed at every index `k >= M`, taking the GL sum about the cycle's
/// initial state `(soc_origin, up_origin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub soc_pred: Vec<f64>,
    pub up_pred: Vec<f64>,
    pub currents: Vec<f64>,
    pub soc_true: Vec<f64>,
    pub soc_origin: f64,
    pub up_origin: f64,
}

impl SequenceSample {
    fn validate(&self) -> Result<()> {
        let n = self.soc_pred.len();
        if n == 0 || self.up_pred.len() != n || self.currents.len() != n {
            return domain("sample predictions and currents must share a non-zero length");
        }
        if self.soc_true.len() > n {
            return domain("more SOC labels than predictions");
        }
        Ok(())
    }

    fn residual_points(&self, memory_len: usize) -> usize {
        self.soc_pred.len().saturating_sub(memory_len)
    }
}

/// `dL_total / d prediction` for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrads {
    pub d_soc: Vec<f64>,
    pub d_up: Vec<f64>,
}

impl PredictionGrads {
    pub fn is_zero_at(&self, k: usize) -> bool {
        self.d_soc[k] == 0.0 && self.d_up[k] == 0.0
    }
}

/// Residual series for one sample, `(r_dyn, r_pol)` at indices `M..n`.
pub fn sample_residuals(sample: &SequenceSample, cfg: &PhysicsConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    sample.validate()?;
    let p = &cfg.params;
    let dc = cfg.dyn_coeffs();
    let pc = cfg.pol_coeffs();
    let m = cfg.memory_len;
    let n = sample.soc_pred.len();
    let mut r_dyn = Vec::with_capacity(n.saturating_sub(m));
    let mut r_pol = Vec::with_capacity(n.saturating_sub(m));
    for t in m..n {
        let mut rd = p.eta * sample.currents[t] / p.capacity_c_n;
        // The U_p/R_p term is absolute, not taken about the origin.
        let mut rp = sample.up_origin / p.rp - sample.currents[t];
        for j in 0..=m {
            rd += dc[j] * (sample.soc_pred[t - j] - sample.soc_origin);
            rp += pc[j] * (sample.up_pred[t - j] - sample.up_origin);
        }
        r_dyn.push(rd);
        r_pol.push(rp);
    }
    Ok((r_dyn, r_pol))
}

/// Batch loss and its gradient with respect to every prediction.
///
/// `l_data` averages over all labels in the batch, `l_dyn` and `l_pol` over
/// all residual points. With `λ = 0` the physics terms are still reported but
/// contribute nothing, not even signed zeros, to the gradients.
pub fn total_loss(
    batch: &[SequenceSample],
    cfg: &PhysicsConfig,
    lw: LossWeights,
) -> Result<(LossBreakdown, Vec<PredictionGrads>)> {
    if batch.is_empty() {
        return domain("empty batch");
    }
    for s in batch {
        s.validate()?;
    }
    let n_data: usize = batch.iter().map(|s| s.soc_true.len()).sum();
    if n_data == 0 {
        return domain("batch carries no SOC labels");
    }
    let n_res: usize = batch.iter().map(|s| s.residual_points(cfg.memory_len)).sum();
    let m = cfg.memory_len;
    let dc = cfg.dyn_coeffs();
    let pc = cfg.pol_coeffs();

    let mut sq_data = 0.0;
    let mut sq_dyn = 0.0;
    let mut sq_pol = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for s in batch {
        let n = s.soc_pred.len();
        let mut g = PredictionGrads {
            d_soc: vec![0.0; n],
            d_up: vec![0.0; n],
        };
        let first = n - s.soc_true.len();
        for (k, y) in (first..n).zip(&s.soc_true) {
            let e = s.soc_pred[k] - y;
            sq_data += e * e;
            g.d_soc[k] = 2.0 * e / n_data as f64;
        }
        let (r_dyn, r_pol) = sample_residuals(s, cfg)?;
        sq_dyn += r_dyn.iter().map(|r| r * r).sum::<f64>();
        sq_pol += r_pol.iter().map(|r| r * r).sum::<f64>();
        if lw.lambda != 0.0 {
            let k = 2.0 * lw.lambda / n_res as f64;
            for (i, (rd, rp)) in r_dyn.iter().zip(&r_pol).enumerate() {
                let t = m + i;
                for j in 0..=m {
                    g.d_soc[t - j] += k * rd * dc[j];
                    g.d_up[t - j] += k * rp * pc[j];
                }
            }
        }
        grads.push(g);
    }
    let (l_dyn, l_pol) = if n_res == 0 {
        (0.0, 0.0)
    } else {
        (sq_dyn / n_res as f64, sq_pol / n_res as f64)
    };
    Ok((LossBreakdown::from_parts(sq_data / n_data as f64, l_dyn, l_pol, lw), grads))
}
