//! Fractional-order equivalent-circuit cell: series resistance `R0` plus one
//! polarization branch made of `Rp` in parallel with a constant phase element.
//!
//! ```text
//! D^alpha SOC           = -eta I / Cn
//! Cp D^alpha Up + Up/Rp = I
//! Ut                    = OCV(SOC) - I R0 - Up
//! ```
//!
//! Positive current discharges the cell. Both fractional equations are
//! stepped with the truncated GL sum from [`crate::frac_calc`]; the
//! polarization update is semi-implicit in the `Up/Rp` term, which keeps the
//! stiff RC branch stable for any step.

use serde::{Deserialize, Serialize};

use crate::data::CycleRecord;
use crate::error::{domain, Result};
use crate::frac_calc::{FracOrder, GlWeights, HistoryBuffer};

/// Piecewise-linear open-circuit voltage curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvCurve {
    breakpoints: Vec<(f64, f64)>,
}

impl OcvCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return domain("OCV curve needs at least two breakpoints");
        }
        for &(soc, v) in &breakpoints {
            if !(0.0..=1.0).contains(&soc) || !v.is_finite() {
                return domain(format!("bad OCV breakpoint ({soc}, {v})"));
            }
        }
        for pair in breakpoints.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return domain("OCV breakpoints must have strictly increasing SOC");
            }
            if pair[1].1 < pair[0].1 {
                return domain("OCV must be non-decreasing in SOC");
            }
        }
        Ok(Self { breakpoints })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn ocv(&self, soc: f64) -> Result<f64> {
        let first = self.breakpoints[0];
        let last = self.breakpoints[self.breakpoints.len() - 1];
        if !(0.0..=1.0).contains(&soc) {
            return domain(format!("SOC {soc} outside [0, 1]"));
        }
        if soc <= first.0 {
            return Ok(first.1);
        }
        if soc >= last.0 {
            return Ok(last.1);
        }
        let i = self.breakpoints.partition_point(|&(s, _)| s <= soc);
        let (s0, v0) = self.breakpoints[i - 1];
        let (s1, v1) = self.breakpoints[i];
        if soc == s0 {
            return Ok(v0);
        }
        Ok(v0 + (v1 - v0) * (soc - s0) / (s1 - s0))
    }
}

impl Default for OcvCurve {
    /// Generic NMC-like shape: 3.0 V empty, 4.2 V full, flat between 30 and 70 %.
    fn default() -> Self {
        Self::new(vec![
            (0.0, 3.0),
            (0.05, 3.3),
            (0.1, 3.45),
            (0.2, 3.56),
            (0.3, 3.63),
            (0.7, 3.72),
            (0.8, 3.85),
            (0.9, 4.0),
            (1.0, 4.2),
        ])
        .expect("default OCV table is valid")
    }
}

/// Evaluates `curve` at `soc`.
pub fn ocv(curve: &OcvCurve, soc: f64) -> Result<f64> {
    curve.ocv(soc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Rated capacity in ampere-seconds.
    pub capacity_c_n: f64,
    /// Coulombic efficiency.
    pub eta: f64,
    pub r0: f64,
    pub rp: f64,
    /// CPE coefficient, F s^(alpha - 1).
    pub cp: f64,
    pub alpha: FracOrder,
    pub ocv: OcvCurve,
}

impl BatteryParams {
    pub fn new(
        capacity_c_n: f64,
        eta: f64,
        r0: f64,
        rp: f64,
        cp: f64,
        alpha: FracOrder,
        ocv: OcvCurve,
    ) -> Result<Self> {
        let p = Self {
            capacity_c_n,
            eta,
            r0,
            rp,
            cp,
            alpha,
            ocv,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_c_n.is_finite() && self.capacity_c_n > 0.0) {
            return domain("capacity must be positive");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return domain("coulombic efficiency must lie in (0, 1]");
        }
        if !(self.r0.is_finite() && self.r0 >= 0.0) {
            return domain("R0 must be non-negative");
        }
        if !(self.rp.is_finite() && self.rp > 0.0) {
            return domain("Rp must be positive");
        }
        if !(self.cp.is_finite() && self.cp > 0.0) {
            return domain("Cp must be positive");
        }
        Ok(())
    }

    pub fn with_alpha(mut self, alpha: FracOrder) -> Self {
        self.alpha = alpha;
        self
    }
}

impl Default for BatteryParams {
    /// A 3 Ah 18650-class cell.
    fn default() -> Self {
        Self {
            capacity_c_n: 3.0 * 3600.0,
            eta: 0.999,
            r0: 0.02,
            rp: 0.015,
            cp: 2000.0,
            alpha: FracOrder::ONE,
            ocv: OcvCurve::default(),
        }
    }
}

/// Evolving cell state with the GL histories of both fractional states.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    pub u_p: f64,
    pub soc_history: HistoryBuffer,
    pub up_history: HistoryBuffer,
    /// Set once any step had to clamp SOC into [0, 1].
    pub saturated: bool,
}

impl BatteryState {
    /// A state at rest: `soc0` and `up0` are both the current value and the origin.
    pub fn new(soc0: f64, up0: f64, memory_len: usize, t_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&soc0) {
            return domain(format!("initial SOC {soc0} outside [0, 1]"));
        }
        let mut soc_history = HistoryBuffer::new(memory_len, t_s)?;
        let mut up_history = HistoryBuffer::new(memory_len, t_s)?;
        soc_history.push(soc0);
        up_history.push(up0);
        Ok(Self {
            soc: soc0,
            u_p: up0,
            soc_history,
            up_history,
            saturated: false,
        })
    }
}

/// Cell parameters bound to a GL discretization (order, memory, step).
#[derive(Debug, Clone)]
pub struct BatteryModel {
    params: BatteryParams,
    weights: GlWeights,
    t_s: f64,
}

impl BatteryModel {
    pub fn new(params: BatteryParams, memory_len: usize, t_s: f64) -> Result<Self> {
        params.validate()?;
        if !(t_s.is_finite() && t_s > 0.0) {
            return domain(format!("sample step {t_s} must be positive"));
        }
        let weights = GlWeights::new(params.alpha, memory_len)?;
        Ok(Self { params, weights, t_s })
    }

    pub fn params(&self) -> &BatteryParams {
        &self.params
    }

    pub fn weights(&self) -> &GlWeights {
        &self.weights
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn initial_state(&self, soc0: f64) -> Result<BatteryState> {
        BatteryState::new(soc0, 0.0, self.weights.memory_len(), self.t_s)
    }

    /// Advances `state` by one sample under `current`. Returns `true` if SOC was clamped.
    pub fn step(&self, state: &mut BatteryState, current: f64) -> bool {
        let p = &self.params;
        let w = self.weights.as_slice();
        let scale = self.t_s.powf(p.alpha.value());

        let soc0 = state.soc_history.origin().unwrap_or(state.soc);
        let up0 = state.up_history.origin().unwrap_or(state.u_p);
        // Histories still hold t-1, t-2, ...: lag (j - 1) is sample t - j.
        let mut soc_memory = 0.0;
        let mut up_memory = 0.0;
        for (j, wj) in w.iter().enumerate().skip(1) {
            soc_memory += wj * (state.soc_history.lagged(j - 1).unwrap_or(soc0) - soc0);
            up_memory += wj * (state.up_history.lagged(j - 1).unwrap_or(up0) - up0);
        }

        let mut soc = soc0 + scale * (-p.eta * current / p.capacity_c_n) - soc_memory;
        let k = scale / (p.cp * p.rp);
        let u_p = (scale * current / p.cp + up0 - up_memory) / (1.0 + k);

        let clamped = !(0.0..=1.0).contains(&soc);
        if clamped {
            soc = soc.clamp(0.0, 1.0);
            state.saturated = true;
        }
        state.soc = soc;
        state.u_p = u_p;
        state.soc_history.push(soc);
        state.up_history.push(u_p);
        clamped
    }

    pub fn terminal_voltage(&self, state: &BatteryState, current: f64) -> Result<f64> {
        terminal_voltage(&self.params, state, current)
    }
}

/// `OCV(SOC) - I R0 - Up`.
pub fn terminal_voltage(params: &BatteryParams, state: &BatteryState, current: f64) -> Result<f64> {
    Ok(params.ocv.ocv(state.soc)? - current * params.r0 - state.u_p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoulombTrace {
    pub soc: Vec<f64>,
    pub saturated: bool,
}

/// Rectangle-rule charge counting: `soc_k = soc_{k-1} - eta I_k T_s / C_n`.
pub fn coulomb_count(soc0: f64, currents: &[f64], t_s: f64, eta: f64, c_n: f64) -> Result<CoulombTrace> {
    if !(0.0..=1.0).contains(&soc0) {
        return domain(format!("initial SOC {soc0} outside [0, 1]"));
    }
    if !(c_n > 0.0 && t_s > 0.0) {
        return domain("capacity and step must be positive");
    }
    let mut saturated = false;
    let mut soc = soc0;
    let trace = currents
        .iter()
        .map(|&i| {
            soc -= eta * i * t_s / c_n;
            if !(0.0..=1.0).contains(&soc) {
                soc = soc.clamp(0.0, 1.0);
                saturated = true;
            }
            soc
        })
        .collect();
    Ok(CoulombTrace { soc: trace, saturated })
}

/// Capacity ratio in percent.
pub fn state_of_health(q_max: f64, q_initial: f64) -> Result<f64> {
    if !(q_initial > 0.0) {
        return domain("initial capacity must be positive");
    }
    Ok(100.0 * q_max / q_initial)
}

/// Simulated cycle: records plus whether SOC ever saturated.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<CycleRecord>,
    pub saturated: bool,
}

/// Per-sample currents for a `(current, duration)` profile.
pub fn expand_profile(profile: &[(f64, f64)], t_s: f64) -> Vec<f64> {
    profile
        .iter()
        .flat_map(|&(current, duration)| {
            let n = (duration / t_s).round() as usize;
            std::iter::repeat_n(current, n)
        })
        .collect()
}

/// Runs the model over a sampled current sequence.
///
/// Record 0 is the rest state at `t = 0` (zero current, `soc0`, `Up = 0`);
/// record `k` holds the state after the `k`-th current sample.
pub fn simulate_currents(
    model: &BatteryModel,
    currents: &[f64],
    soc0: f64,
    temperature_c: f64,
) -> Result<SimTrace> {
    let mut state = model.initial_state(soc0)?;
    let t_s = model.t_s();
    let mut records = Vec::with_capacity(currents.len() + 1);
    records.push(CycleRecord {
        t: 0.0,
        current: 0.0,
        voltage: model.terminal_voltage(&state, 0.0)?,
        temperature: temperature_c,
        soc_true: Some(state.soc),
        up_true: Some(state.u_p),
    });
    for (k, &current) in currents.iter().enumerate() {
        model.step(&mut state, current);
        records.push(CycleRecord {
            t: (k + 1) as f64 * t_s,
            current,
            voltage: model.terminal_voltage(&state, current)?,
            temperature: temperature_c,
            soc_true: Some(state.soc),
            up_true: Some(state.u_p),
        });
    }
    Ok(SimTrace {
        records,
        saturated: state.saturated,
    })
}

/// Simulates a piecewise-constant `(current A, duration s)` profile.
pub fn simulate_cycle(
    params: &BatteryParams,
    profile: &[(f64, f64)],
    t_s: f64,
    soc0: f64,
    memory_len: usize,
    temperature_c: f64,
) -> Result<SimTrace> {
    if profile.is_empty() {
        return domain("empty current profile");
    }
    let model = BatteryModel::new(params.clone(), memory_len, t_s)?;
    simulate_currents(&model, &expand_profile(profile, t_s), soc0, temperature_c)
}
