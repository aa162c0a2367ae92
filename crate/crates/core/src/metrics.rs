//! MAE, MSE and RMSE over paired sequences.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        check(y, y_hat)?;
        let n = y.len() as f64;
        let (abs, sq) = y
            .iter()
            .zip(y_hat)
            .fold((0.0, 0.0), |(a, s), (t, p)| {
                let e = t - p;
                (a + e.abs(), s + e * e)
            });
        let mse = sq / n;
        Ok(Self {
            mae: abs / n,
            mse,
            rmse: mse.sqrt(),
            n: y.len(),
        })
    }
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return domain("metrics need at least one sample");
    }
    if y.len() != y_hat.len() {
        return domain(format!("length mismatch: {} vs {}", y.len(), y_hat.len()));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    Ok(MetricReport::compute(y, y_hat)?.mae)
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    Ok(MetricReport::compute(y, y_hat)?.mse)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    Ok(MetricReport::compute(y, y_hat)?.rmse)
}
