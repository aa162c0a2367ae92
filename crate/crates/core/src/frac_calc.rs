//! Grünwald-Letnikov fractional derivatives over sampled signals.
//!
//! The derivative of order `alpha` at the newest sample is approximated by a
//! weighted sum over the last `M + 1` samples:
//!
//! ```text
//! D^alpha x(t) ~ T_s^-alpha * sum_{j=0..M} w_j * (x(t - j T_s) - x0)
//! ```
//!
//! where `w_j = (-1)^j binom(alpha, j)` and `x0` is the signal's origin, the
//! first value it ever took. Samples before the origin read as `x0`, so a
//! signal that sits at its starting value has zero derivative for every order
//! and every memory length.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Fractional order, restricted to `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            domain(format!("fractional order {alpha} outside (0, 1]"))
        }
    }

    /// Integer order; the GL sum collapses to a backward difference.
    pub const ONE: FracOrder = FracOrder(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FracOrder> for f64 {
    fn from(value: FracOrder) -> f64 {
        value.0
    }
}

/// Binomial weights `w_0 ..= w_M` for one order and memory length.
#[derive(Debug, Clone, PartialEq)]
pub struct GlWeights {
    alpha: FracOrder,
    weights: Vec<f64>,
}

impl GlWeights {
    /// Builds the weights with the recurrence `w_j = w_{j-1} (1 - (alpha + 1) / j)`.
    pub fn new(alpha: FracOrder, memory_len: usize) -> Result<Self> {
        if memory_len < 1 {
            return domain("memory length must be at least 1");
        }
        let a = alpha.value();
        let mut weights = Vec::with_capacity(memory_len + 1);
        weights.push(1.0);
        for j in 1..=memory_len {
            let prev = weights[j - 1];
            weights.push(prev * (1.0 - (a + 1.0) / j as f64));
        }
        Ok(Self { alpha, weights })
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    /// `M`, the number of past samples behind the current one.
    pub fn memory_len(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// `T_s^-alpha`, the scale applied to the weighted sum.
    pub fn step_scale(&self, step: f64) -> f64 {
        step.powf(-self.alpha.value())
    }
}

/// Shorthand for [`GlWeights::new`].
pub fn gl_weights(alpha: FracOrder, memory_len: usize) -> Result<GlWeights> {
    GlWeights::new(alpha, memory_len)
}

/// Fixed-capacity sample history, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    samples: VecDeque<f64>,
    step: f64,
    origin: Option<f64>,
}

impl HistoryBuffer {
    /// A buffer holding `memory_len + 1` samples spaced `step` seconds apart.
    /// The first pushed sample becomes the origin.
    pub fn new(memory_len: usize, step: f64) -> Result<Self> {
        if memory_len < 1 {
            return domain("memory length must be at least 1");
        }
        if !(step.is_finite() && step > 0.0) {
            return domain(format!("sample step {step} must be positive"));
        }
        Ok(Self {
            capacity: memory_len + 1,
            samples: VecDeque::with_capacity(memory_len + 1),
            step,
            origin: None,
        })
    }

    /// Like [`HistoryBuffer::new`] but with the origin fixed up front, for
    /// histories that start partway through a signal.
    pub fn with_origin(memory_len: usize, step: f64, origin: f64) -> Result<Self> {
        let mut buf = Self::new(memory_len, step)?;
        buf.origin = Some(origin);
        Ok(buf)
    }

    pub fn push(&mut self, x: f64) {
        if self.origin.is_none() {
            self.origin = Some(x);
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_back();
        }
        self.samples.push_front(x);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn origin(&self) -> Option<f64> {
        self.origin
    }

    pub fn newest(&self) -> Option<f64> {
        self.samples.front().copied()
    }

    /// Sample `lag` steps back; lags past the stored history read as the origin.
    pub fn lagged(&self, lag: usize) -> Option<f64> {
        self.samples.get(lag).copied().or(self.origin)
    }
}

/// GL derivative at the newest sample of `history`.
pub fn gl_derivative(history: &HistoryBuffer, weights: &GlWeights) -> Result<f64> {
    let origin = match (history.newest(), history.origin()) {
        (Some(_), Some(origin)) => origin,
        _ => return domain("GL derivative of an empty history"),
    };
    if weights.as_slice().len() > history.capacity() {
        return domain(format!(
            "weights span {} samples but history holds at most {}",
            weights.as_slice().len(),
            history.capacity()
        ));
    }
    Ok(deviation_sum(weights, history.samples.iter().copied(), origin) / history.step().powf(weights.alpha().value()))
}

/// `sum_j w_j (x_j - origin)` over the stored samples, newest first.
///
/// Padded samples equal the origin and add nothing. Terms are taken
/// relative to the previous sample so constant histories give exactly zero
/// and first order gives exactly `x_t - x_{t-1}`.
fn deviation_sum(weights: &GlWeights, samples: impl Iterator<Item = f64> + Clone, origin: f64) -> f64 {
    let r = samples.clone().nth(1).unwrap_or(origin);
    let (sum, wsum) = weights
        .as_slice()
        .iter()
        .zip(samples)
        .fold((0.0, 0.0), |(s, ws), (w, x)| (s + w * (x - r), ws + w));
    sum + (r - origin) * wsum
}

/// GL derivative at index `t` of a time-ordered (oldest first) series.
///
/// Indices before the start of `series` read as `origin`. Equivalent to
/// pushing `series[..=t]` through a [`HistoryBuffer`] with that origin.
pub fn gl_derivative_at(series: &[f64], t: usize, origin: f64, weights: &GlWeights, step: f64) -> f64 {
    debug_assert!(t < series.len());
    deviation_sum(weights, series[..=t].iter().rev().copied(), origin) / step.powf(weights.alpha().value())
}

/// Impedance of a constant phase element, `1 / (q (i omega)^alpha)`.
pub fn cpe_impedance(q: f64, alpha: FracOrder, omega: f64) -> Result<Complex64> {
    if !(q.is_finite() && q > 0.0) {
        return domain(format!("CPE coefficient {q} must be positive"));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return domain(format!("angular frequency {omega} must be positive"));
    }
    let a = alpha.value();
    let magnitude = 1.0 / (q * omega.powf(a));
    Ok(Complex64::from_polar(magnitude, -a * FRAC_PI_2))
}
