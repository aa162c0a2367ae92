//! Windowing, the training loop and evaluation.
//!
//! A training sample is a *segment*: up to `window_len` consecutive stride-1
//! windows from one cycle. Each window predicts SOC and U_p at its final
//! step; the segment's predictions form the history the physics residuals
//! are evaluated on (from segment index `M` onward), and every labelled
//! prediction enters the data loss.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cycle, Dataset, Normalizer};
use crate::error::{domain, Error, Result};
use crate::frac_calc::FracOrder;
use crate::metrics::MetricReport;
use crate::nn::{
    adam_step, backward_into, forward, init_params, load_checkpoint, save_checkpoint, AdamConfig, AdamState,
    Arch, ForwardCache, Gradients, NetworkConfig, NetworkParams,
};
use crate::pinn_loss::{data_loss, total_loss, LossBreakdown, LossWeights, PhysicsConfig, PredictionGrads, SequenceSample};

/// Plain data-driven network or its physics-regularized counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    #[serde(rename = "pinn")]
    FdiffPinn,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Plain, Variant::FdiffPinn];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::FdiffPinn => "pinn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(Variant::Plain),
            "pinn" | "fdiff-pinn" => Ok(Variant::FdiffPinn),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Display name used in result tables, e.g. `LSTM` or `FDIFF-PINN-LSTM`.
pub fn model_name(arch: Arch, variant: Variant) -> String {
    match variant {
        Variant::Plain => arch.to_string(),
        Variant::FdiffPinn => format!("FDIFF-PINN-{arch}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub learning_rate: f64,
    pub window_len: usize,
    pub lambda: f64,
    pub memory_len: usize,
    pub alpha: FracOrder,
    /// Windows per batch, rounded down to whole segments (at least one).
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Gradient-norm ceiling.
    pub grad_clip: f64,
    /// Final learning rate as a fraction of `learning_rate`, reached by
    /// cosine annealing over the epochs. 1 keeps the rate constant.
    pub lr_final_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FdiffPinn,
            epochs: 30,
            learning_rate: 1e-3,
            window_len: 20,
            lambda: 0.25,
            memory_len: 10,
            alpha: FracOrder::ONE,
            batch_size: 64,
            seed: 1,
            init_scale: 0.1,
            grad_clip: 10.0,
            lr_final_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        LossWeights::new(self.lambda)?;
        if self.window_len == 0 || self.batch_size == 0 || self.memory_len == 0 {
            return domain("window_len, batch_size and memory_len must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return domain(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return domain(format!("init scale {} must be positive", self.init_scale));
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return domain(format!("final lr fraction {} must lie in (0, 1]", self.lr_final_fraction));
        }
        if !(self.grad_clip > 0.0) {
            return domain(format!("gradient clip {} must be positive", self.grad_clip));
        }
        if self.variant == Variant::FdiffPinn && self.memory_len >= self.window_len {
            return domain(format!(
                "memory length {} leaves no residual points in a {}-window segment",
                self.memory_len, self.window_len
            ));
        }
        Ok(())
    }

    /// Learning rate for `epoch` under cosine annealing.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.lr_final_fraction == 1.0 {
            return self.learning_rate;
        }
        let progress = epoch as f64 / (self.epochs - 1) as f64;
        let floor = self.learning_rate * self.lr_final_fraction;
        floor + 0.5 * (self.learning_rate - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: match self.variant {
                Variant::Plain => 0.0,
                Variant::FdiffPinn => self.lambda,
            },
        }
    }

    fn check_physics(&self, physics: &PhysicsConfig) -> Result<()> {
        if physics.params.alpha != self.alpha || physics.memory_len() != self.memory_len {
            return domain(format!(
                "physics (alpha {}, M {}) disagrees with training config (alpha {}, M {})",
                physics.params.alpha.value(),
                physics.memory_len(),
                self.alpha.value(),
                self.memory_len
            ));
        }
        Ok(())
    }
}

/// Stride-1 windows over one cycle, with per-window targets at the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleWindows {
    /// Row-major `window_len x 3` normalized features per window.
    pub inputs: Vec<Vec<f64>>,
    pub soc_targets: Vec<f64>,
    /// Raw current at each window's final step, in amperes.
    pub currents: Vec<f64>,
    pub soc_origin: f64,
    pub up_origin: f64,
}

impl CycleWindows {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Slides a `window_len` window over `cycle` with stride 1.
pub fn make_windows(cycle: &Cycle, window_len: usize, normalizer: &Normalizer) -> Result<CycleWindows> {
    if window_len == 0 {
        return domain("window_len must be at least 1");
    }
    if cycle.len() < window_len {
        return domain(format!(
            "cycle {} has {} records, fewer than the window length {window_len}",
            cycle.name,
            cycle.len()
        ));
    }
    let labels = cycle
        .soc_labels()
        .ok_or_else(|| Error::Domain(format!("cycle {} lacks SOC labels", cycle.name)))?;
    let (soc_origin, up_origin) = cycle.origin().expect("labelled and non-empty");
    let features: Vec<[f64; 3]> = cycle.records.iter().map(|r| normalizer.features(r)).collect();
    let n = cycle.len() - window_len + 1;
    Ok(CycleWindows {
        inputs: (0..n)
            .map(|k| features[k..k + window_len].iter().flatten().copied().collect())
            .collect(),
        soc_targets: labels[window_len - 1..].to_vec(),
        currents: cycle.records[window_len - 1..].iter().map(|r| r.current).collect(),
        soc_origin,
        up_origin,
    })
}

/// Network weights with the input scaling they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub normalizer: Normalizer,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        save_checkpoint(path, &self.params, Some(&self.normalizer))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let normalizer = ck
            .normalizer
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no normalizer".into()))?;
        Ok(Self {
            params: ck.params,
            normalizer,
        })
    }

    /// Final-step `(soc, up)` predictions for every window of `cycle`.
    pub fn predict(&self, cycle: &Cycle) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = make_windows(cycle, self.params.config().window_len, &self.normalizer)?;
        predict_windows(&self.params, &w.inputs)
    }
}

fn predict_windows(params: &NetworkParams, inputs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut soc = Vec::with_capacity(inputs.len());
    let mut up = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (p, _) = forward(params, x)?;
        soc.push(p.soc);
        up.push(p.up);
    }
    Ok((soc, up))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub losses: LossBreakdown,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-averaged training losses.
    pub train: LossBreakdown,
    pub val: Option<Validation>,
    pub clip_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn clip_events(&self) -> usize {
        self.epochs.iter().map(|e| e.clip_events).sum()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Per-epoch CSV. Wall time is left out so equal runs give equal bytes.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record([
            "epoch",
            "l_data",
            "l_dyn",
            "l_pol",
            "l_phy",
            "l_total",
            "val_l_data",
            "val_l_dyn",
            "val_l_pol",
            "val_l_phy",
            "val_l_total",
            "val_mae",
            "val_mse",
            "val_rmse",
            "clip_events",
        ])?;
        let f = |v: f64| format!("{v:.16e}");
        for e in &self.epochs {
            let t = &e.train;
            let mut row = vec![e.epoch.to_string(), f(t.l_data), f(t.l_dyn), f(t.l_pol), f(t.l_phy), f(t.l_total)];
            match &e.val {
                Some(v) => {
                    let l = &v.losses;
                    row.extend([l.l_data, l.l_dyn, l.l_pol, l.l_phy, l.l_total].map(f));
                    row.extend([v.metrics.mae, v.metrics.mse, v.metrics.rmse].map(f));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 8)),
            }
            row.push(e.clip_events.to_string());
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// A segment of consecutive windows from one cycle.
#[derive(Debug, Clone, Copy)]
struct Segment {
    cycle: usize,
    start: usize,
    len: usize,
}

fn segments(cycles: &[CycleWindows], seg_len: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    for (ci, c) in cycles.iter().enumerate() {
        let mut start = 0;
        while start < c.len() {
            let len = seg_len.min(c.len() - start);
            out.push(Segment { cycle: ci, start, len });
            start += len;
        }
    }
    out
}

struct SegmentPass {
    caches: Vec<ForwardCache>,
    sample: SequenceSample,
}

fn forward_segment(params: &NetworkParams, cycles: &[CycleWindows], s: Segment) -> Result<SegmentPass> {
    let c = &cycles[s.cycle];
    let range = s.start..s.start + s.len;
    let mut caches = Vec::with_capacity(s.len);
    let mut soc_pred = Vec::with_capacity(s.len);
    let mut up_pred = Vec::with_capacity(s.len);
    for x in &c.inputs[range.clone()] {
        let (p, cache) = forward(params, x)?;
        soc_pred.push(p.soc);
        up_pred.push(p.up);
        caches.push(cache);
    }
    Ok(SegmentPass {
        caches,
        sample: SequenceSample {
            soc_pred,
            up_pred,
            currents: c.currents[range.clone()].to_vec(),
            soc_true: c.soc_targets[range].to_vec(),
            soc_origin: c.soc_origin,
            up_origin: c.up_origin,
        },
    })
}

/// Data-loss-only gradients, as a plain network would be trained.
fn plain_loss(batch: &[SequenceSample]) -> Result<(LossBreakdown, Vec<PredictionGrads>)> {
    let n_data: usize = batch.iter().map(|s| s.soc_true.len()).sum();
    let pred: Vec<f64> = batch.iter().flat_map(|s| s.soc_pred.iter().copied()).collect();
    let truth: Vec<f64> = batch.iter().flat_map(|s| s.soc_true.iter().copied()).collect();
    let l_data = data_loss(&pred, &truth)?;
    let grads = batch
        .iter()
        .map(|s| PredictionGrads {
            d_soc: s
                .soc_pred
                .iter()
                .zip(&s.soc_true)
                .map(|(p, y)| 2.0 * (p - y) / n_data as f64)
                .collect(),
            d_up: vec![0.0; s.up_pred.len()],
        })
        .collect();
    let lb = LossBreakdown {
        l_data,
        l_total: l_data,
        ..LossBreakdown::default()
    };
    Ok((lb, grads))
}

/// Loss and parameter gradient for a batch of segments.
fn batch_step(
    params: &NetworkParams,
    cycles: &[CycleWindows],
    batch: &[Segment],
    variant: Variant,
    physics: &PhysicsConfig,
    lw: LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    let passes: Vec<SegmentPass> = batch
        .par_iter()
        .map(|&s| forward_segment(params, cycles, s))
        .collect::<Result<_>>()?;
    let samples: Vec<SequenceSample> = passes.iter().map(|p| p.sample.clone()).collect();
    let (losses, pred_grads) = match variant {
        Variant::Plain => plain_loss(&samples)?,
        Variant::FdiffPinn => total_loss(&samples, physics, lw)?,
    };
    let per_segment: Vec<Gradients> = passes
        .par_iter()
        .zip(&pred_grads)
        .map(|(pass, g)| {
            let mut acc = Gradients::zeros_like(params);
            for (k, cache) in pass.caches.iter().enumerate() {
                if !g.is_zero_at(k) {
                    backward_into(params, cache, [g.d_soc[k], g.d_up[k]], &mut acc)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    // Fixed summation order, whatever the thread schedule.
    let mut grads = Gradients::zeros_like(params);
    for g in &per_segment {
        grads.add_assign(g);
    }
    Ok((losses, grads))
}

/// Loss and gradient of one batch built from whole cycles, for gradient
/// checks. Each cycle becomes a single segment.
pub fn loss_and_gradient(
    params: &NetworkParams,
    cycles: &[CycleWindows],
    variant: Variant,
    physics: &PhysicsConfig,
    lw: LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    let batch: Vec<Segment> = cycles
        .iter()
        .enumerate()
        .map(|(i, c)| Segment {
            cycle: i,
            start: 0,
            len: c.len(),
        })
        .collect();
    batch_step(params, cycles, &batch, variant, physics, lw)
}

fn window_cycles(ds: &Dataset, window_len: usize, normalizer: &Normalizer) -> Result<Vec<CycleWindows>> {
    ds.cycles().iter().map(|c| make_windows(c, window_len, normalizer)).collect()
}

/// Trains a network on `train`, reporting validation metrics on `val` (which
/// may be empty) after each epoch. The input normalizer is fitted on `train`.
pub fn train(
    config: &TrainConfig,
    net: &NetworkConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    physics: &PhysicsConfig,
) -> Result<(TrainedModel, TrainReport)> {
    train_observed(config, net, train_set, val_set, physics, |_, _| {})
}

/// [`train`], calling `observer(step, params)` after every optimizer step.
pub fn train_observed(
    config: &TrainConfig,
    net: &NetworkConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    physics: &PhysicsConfig,
    mut observer: impl FnMut(usize, &NetworkParams),
) -> Result<(TrainedModel, TrainReport)> {
    let start = Instant::now();
    config.validate()?;
    config.check_physics(physics)?;
    if train_set.is_empty() {
        return domain("empty training set");
    }
    if net.window_len != config.window_len {
        return domain(format!(
            "network window {} differs from training window {}",
            net.window_len, config.window_len
        ));
    }
    let normalizer = Normalizer::fit(train_set)?;
    let train_windows = window_cycles(train_set, config.window_len, &normalizer)?;
    let val_windows = window_cycles(val_set, config.window_len, &normalizer)?;
    let lw = config.loss_weights();

    let mut params = init_params(net, config.seed, config.init_scale)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order = segments(&train_windows, config.window_len);
    let per_batch = (config.batch_size / config.window_len).max(1);

    let mut records = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        adam.config.lr = config.learning_rate_at(epoch);
        let mut sum = LossBreakdown::default();
        let mut clip_events = 0;
        let n_batches = order.len().div_ceil(per_batch);
        for (b, batch) in order.chunks(per_batch).enumerate() {
            let (losses, mut grads) = batch_step(&params, &train_windows, batch, config.variant, physics, lw)?;
            if let Some(component) = losses.non_finite() {
                return Err(Error::NonFinite { epoch, batch: b, component });
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    component: "gradient",
                });
            }
            let norm = grads.norm();
            if norm > config.grad_clip {
                grads.scale(config.grad_clip / norm);
                clip_events += 1;
            }
            adam_step(&mut params, &grads, &mut adam)?;
            step += 1;
            observer(step, &params);
            sum.l_data += losses.l_data;
            sum.l_dyn += losses.l_dyn;
            sum.l_pol += losses.l_pol;
        }
        let nb = n_batches as f64;
        let train_losses = LossBreakdown::from_parts(sum.l_data / nb, sum.l_dyn / nb, sum.l_pol / nb, lw);
        let val = if val_windows.is_empty() {
            None
        } else {
            let (metrics, losses) = evaluate_windows(&params, &val_windows, physics, lw)?;
            Some(Validation { losses, metrics })
        };
        log::debug!(
            "epoch {epoch}: l_data {:.3e} l_phy {:.3e} clips {clip_events}",
            train_losses.l_data,
            train_losses.l_phy
        );
        records.push(EpochRecord {
            epoch,
            train: train_losses,
            val,
            clip_events,
        });
    }
    Ok((
        TrainedModel { params, normalizer },
        TrainReport {
            epochs: records,
            wall_time: start.elapsed(),
        },
    ))
}

fn evaluate_windows(
    params: &NetworkParams,
    cycles: &[CycleWindows],
    physics: &PhysicsConfig,
    lw: LossWeights,
) -> Result<(MetricReport, LossBreakdown)> {
    if cycles.is_empty() {
        return domain("nothing to evaluate");
    }
    let samples: Vec<SequenceSample> = cycles
        .par_iter()
        .map(|c| {
            let (soc_pred, up_pred) = predict_windows(params, &c.inputs)?;
            Ok(SequenceSample {
                soc_pred,
                up_pred,
                currents: c.currents.clone(),
                soc_true: c.soc_targets.clone(),
                soc_origin: c.soc_origin,
                up_origin: c.up_origin,
            })
        })
        .collect::<Result<_>>()?;
    let pred: Vec<f64> = samples.iter().flat_map(|s| s.soc_pred.iter().copied()).collect();
    let truth: Vec<f64> = samples.iter().flat_map(|s| s.soc_true.iter().copied()).collect();
    let metrics = MetricReport::compute(&truth, &pred)?;
    let (losses, _) = total_loss(&samples, physics, lw)?;
    Ok((metrics, losses))
}

/// SOC metrics over every window's final-step prediction in `dataset`, and
/// the loss terms with each cycle treated as one prediction history.
pub fn evaluate(
    model: &TrainedModel,
    dataset: &Dataset,
    physics: &PhysicsConfig,
    lw: LossWeights,
) -> Result<(MetricReport, LossBreakdown)> {
    let windows = window_cycles(dataset, model.params.config().window_len, &model.normalizer)?;
    evaluate_windows(&model.params, &windows, physics, lw)
}
