//! Sweep and protocol harness: trains grids of models, evaluates them on
//! held-out cycles and writes CSV, Markdown and SVG summaries.

mod options;
mod plot;

use std::fmt;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery_model::BatteryParams;
use crate::data::{
    add_noise, partition, split_validation, synth_corpus, CycleKind, Dataset, NoiseKind, NoiseSpec, PartitionPlan,
    SocRange, SynthSettings, TEMPERATURES,
};
use crate::error::{Error, Result};
use crate::frac_calc::FracOrder;
use crate::metrics::MetricReport;
use crate::nn::{Arch, NetworkConfig};
use crate::pinn_loss::{LossBreakdown, PhysicsConfig};
use crate::training::{evaluate, model_name, train, TrainConfig, TrainReport, TrainedModel, Variant};

pub use options::{ConfigFile, ProtocolOptions, SweepOptions, SynthKind, SynthOptions};
pub use plot::emit_plot;

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    InitScale,
    Noise,
    MemoryLen,
    FracOrder,
    CycleRotation,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::InitScale => "init_scale",
            Axis::Noise => "noise",
            Axis::MemoryLen => "memory_len",
            Axis::FracOrder => "frac_order",
            Axis::CycleRotation => "cycle_rotation",
        }
    }

    /// The grids swept in the reference study.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Lambda => vec![0.0, 0.25, 0.5, 0.75, 1.0, 2.0],
            Axis::InitScale => vec![0.001, 0.005, 0.01, 0.05, 0.1],
            Axis::Noise => vec![0.0, 0.05, 0.1],
            Axis::MemoryLen => vec![5.0, 10.0, 15.0],
            Axis::FracOrder => vec![0.125, 0.25, 0.375, 0.5, 0.75],
            Axis::CycleRotation => vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let integral = v.fract() == 0.0 && v >= 1.0;
        let ok = match self {
            Axis::Lambda | Axis::Noise => v.is_finite() && v >= 0.0,
            Axis::InitScale => v.is_finite() && v > 0.0,
            Axis::MemoryLen => integral,
            Axis::FracOrder => v > 0.0 && v <= 1.0,
            Axis::CycleRotation => integral && v <= 5.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{v} is not a valid {self} value")))
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Axis::Lambda,
            Axis::InitScale,
            Axis::Noise,
            Axis::MemoryLen,
            Axis::FracOrder,
            Axis::CycleRotation,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep axis {s:?}")))
    }
}

/// Settings for the built-in synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub kinds: Vec<CycleKind>,
    pub temperatures: Vec<f64>,
    pub cycle_seconds: f64,
    pub soc_range: SocRange,
    pub seed: u64,
    pub battery: BatteryParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let mut kinds = CycleKind::DRIVE.to_vec();
        kinds.push(CycleKind::CcCv);
        Self {
            kinds,
            temperatures: TEMPERATURES.to_vec(),
            cycle_seconds: 600.0,
            soc_range: SocRange::default(),
            seed: 2024,
            battery: BatteryParams::default(),
        }
    }
}

/// One analogue cycle per `(kind, temperature)`, simulated by the cell model.
pub fn synthetic_corpus(cfg: &CorpusConfig) -> Result<Dataset> {
    let base = SynthSettings {
        duration_s: cfg.cycle_seconds,
        ..SynthSettings::default()
    };
    synth_corpus(&cfg.kinds, &cfg.temperatures, &cfg.battery, &base, cfg.soc_range, cfg.seed)
}

/// Shared settings for sweeps and protocol runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    pub hidden_dims: Vec<usize>,
    /// Cell constants for the physics loss. Order and memory come from `train`.
    pub battery: BatteryParams,
    pub t_s: f64,
    pub validation_fraction: f64,
    pub noise_kind: NoiseKind,
    /// Input noise applied to every cycle before partitioning.
    pub noise_level: f64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden_dims: vec![32],
            battery: BatteryParams::default(),
            t_s: 1.0,
            validation_fraction: 0.2,
            noise_kind: NoiseKind::Gaussian,
            noise_level: 0.0,
            workers: 0,
        }
    }
}

impl RunSettings {
    fn physics(&self, train: &TrainConfig) -> Result<PhysicsConfig> {
        PhysicsConfig::new(self.battery.clone().with_alpha(train.alpha), train.memory_len, self.t_s)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub archs: Vec<Arch>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Built-in partition used unless the axis rotates it.
    pub experiment: u8,
    pub settings: RunSettings,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>) -> Self {
        Self {
            axis,
            values,
            archs: Arch::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            experiment: 5,
            settings: RunSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() || self.archs.is_empty() || self.variants.is_empty() {
            return Err(Error::Config("sweep grid, seeds, archs and variants must be non-empty".into()));
        }
        for &v in &self.values {
            self.axis.check(v)?;
        }
        PartitionPlan::experiment(self.experiment)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub value: f64,
    pub arch: Arch,
    pub variant: Variant,
    pub seed: u64,
}

impl RunKey {
    pub fn model(&self) -> String {
        model_name(self.arch, self.variant)
    }
}

/// Test-set outcome of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub metrics: MetricReport,
    pub losses: LossBreakdown,
    pub clip_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub key: RunKey,
    pub outcome: std::result::Result<RunSummary, String>,
    pub report: Option<TrainReport>,
}

/// Per-cell statistics over the seeds that finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub l_phy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub arch: Arch,
    pub variant: Variant,
    pub ok: usize,
    pub failed: usize,
    pub mean: Option<Stats>,
    pub max: Option<Stats>,
}

impl Aggregate {
    pub fn model(&self) -> String {
        model_name(self.arch, self.variant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub axis: Axis,
    pub runs: Vec<RunResult>,
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

impl ResultTable {
    /// Mean and max over seeds for every `(value, arch, variant)`, in grid order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        for r in &self.runs {
            let k = &r.key;
            let idx = match out
                .iter()
                .position(|a| a.value == k.value && a.arch == k.arch && a.variant == k.variant)
            {
                Some(i) => i,
                None => {
                    out.push(Aggregate {
                        value: k.value,
                        arch: k.arch,
                        variant: k.variant,
                        ok: 0,
                        failed: 0,
                        mean: None,
                        max: None,
                    });
                    out.len() - 1
                }
            };
            let agg = &mut out[idx];
            match &r.outcome {
                Err(_) => agg.failed += 1,
                Ok(s) => {
                    agg.ok += 1;
                    let x = Stats {
                        mae: s.metrics.mae,
                        mse: s.metrics.mse,
                        rmse: s.metrics.rmse,
                        l_phy: s.losses.l_phy,
                    };
                    agg.mean = Some(match agg.mean {
                        None => x,
                        Some(m) => Stats {
                            mae: m.mae + x.mae,
                            mse: m.mse + x.mse,
                            rmse: m.rmse + x.rmse,
                            l_phy: m.l_phy + x.l_phy,
                        },
                    });
                    agg.max = Some(match agg.max {
                        None => x,
                        Some(m) => Stats {
                            mae: m.mae.max(x.mae),
                            mse: m.mse.max(x.mse),
                            rmse: m.rmse.max(x.rmse),
                            l_phy: m.l_phy.max(x.l_phy),
                        },
                    });
                }
            }
        }
        for a in &mut out {
            if let Some(m) = &mut a.mean {
                let n = a.ok as f64;
                m.mae /= n;
                m.mse /= n;
                m.rmse /= n;
                m.l_phy /= n;
            }
        }
        out
    }

    /// One row per run, then `mean` and `max` rows per grid cell.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv_writer();
        w.write_record([
            "row", "axis", "value", "model", "arch", "variant", "seed", "status", "mae", "mse", "rmse", "l_data",
            "l_dyn", "l_pol", "l_phy", "l_total", "clip_events", "error",
        ])?;
        let axis = self.axis.as_str();
        for r in &self.runs {
            let k = &r.key;
            let mut row = vec![
                "run".to_string(),
                axis.to_string(),
                k.value.to_string(),
                k.model(),
                k.arch.as_str().to_string(),
                k.variant.as_str().to_string(),
                k.seed.to_string(),
            ];
            match &r.outcome {
                Ok(s) => {
                    row.push("ok".into());
                    let m = &s.metrics;
                    let l = &s.losses;
                    row.extend([m.mae, m.mse, m.rmse, l.l_data, l.l_dyn, l.l_pol, l.l_phy, l.l_total].map(sci));
                    row.push(s.clip_events.to_string());
                    row.push(String::new());
                }
                Err(e) => {
                    row.push("failed".into());
                    row.extend(std::iter::repeat_n(String::new(), 9));
                    row.push(e.clone());
                }
            }
            w.write_record(&row)?;
        }
        for a in self.aggregates() {
            for (label, stats) in [("mean", a.mean), ("max", a.max)] {
                let mut row = vec![
                    label.to_string(),
                    axis.to_string(),
                    a.value.to_string(),
                    a.model(),
                    a.arch.as_str().to_string(),
                    a.variant.as_str().to_string(),
                    String::new(),
                    format!("{}/{} ok", a.ok, a.ok + a.failed),
                ];
                match stats {
                    Some(s) => {
                        row.extend([sci(s.mae), sci(s.mse), sci(s.rmse)]);
                        row.extend(std::iter::repeat_n(String::new(), 3));
                        row.push(sci(s.l_phy));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 7)),
                }
                row.extend(std::iter::repeat_n(String::new(), 3));
                w.write_record(&row)?;
            }
        }
        finish_csv(w)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "| {} | Model | Runs | MAE mean | MAE max | MSE mean | MSE max | L_phy mean |\n",
            self.axis
        );
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for a in self.aggregates() {
            let runs = format!("{}/{}", a.ok, a.ok + a.failed);
            match (a.mean, a.max) {
                (Some(m), Some(x)) => s.push_str(&format!(
                    "| {} | {} | {} | {:.4} | {:.4} | {:.3e} | {:.3e} | {:.3e} |\n",
                    a.value,
                    a.model(),
                    runs,
                    m.mae,
                    x.mae,
                    m.mse,
                    x.mse,
                    m.l_phy
                )),
                _ => s.push_str(&format!("| {} | {} | {} | failed | | | | |\n", a.value, a.model(), runs)),
            }
        }
        let failures: Vec<&RunResult> = self.runs.iter().filter(|r| r.outcome.is_err()).collect();
        if !failures.is_empty() {
            s.push_str("\nFailed runs:\n\n");
            for r in failures {
                let k = &r.key;
                let e = r.outcome.as_ref().expect_err("filtered");
                s.push_str(&format!("- {} {}={} seed {}: {e}\n", k.model(), self.axis, k.value, k.seed));
            }
        }
        s
    }

    /// Writes `results.csv`, `results.md`, `plot_<axis>.svg` and
    /// `runs/<model>/<axis>-<value>/seed-<seed>/report.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.to_csv()?)?;
        fs::write(dir.join("results.md"), self.to_markdown())?;
        fs::write(dir.join(format!("plot_{}.svg", self.axis)), emit_plot(self)?)?;
        for r in &self.runs {
            if let Some(report) = &r.report {
                let k = &r.key;
                let run_dir = dir
                    .join("runs")
                    .join(k.model())
                    .join(format!("{}-{}", self.axis, k.value))
                    .join(format!("seed-{}", k.seed));
                fs::create_dir_all(&run_dir)?;
                report.save_csv(run_dir.join("report.csv"))?;
            }
        }
        Ok(())
    }
}

/// A fully resolved training job.
struct Job {
    key: RunKey,
    train: TrainConfig,
    net: NetworkConfig,
    experiment: u8,
    noise_level: f64,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_job(job: &Job, corpus: &Dataset, settings: &RunSettings) -> Result<(RunSummary, TrainReport)> {
    let noisy;
    let corpus = if job.noise_level > 0.0 {
        noisy = add_noise(corpus, &NoiseSpec::inputs(settings.noise_kind, job.noise_level, job.key.seed))?;
        &noisy
    } else {
        corpus
    };
    let (train_all, test) = partition(corpus, &PartitionPlan::experiment(job.experiment)?)?;
    let (train_set, val_set) = split_validation(&train_all, settings.validation_fraction);
    let physics = settings.physics(&job.train)?;
    let (model, report) = train(&job.train, &job.net, &train_set, &val_set, &physics)?;
    let (metrics, losses) = evaluate(&model, &test, &physics, job.train.loss_weights())?;
    let summary = RunSummary {
        metrics,
        losses,
        clip_events: report.clip_events(),
    };
    Ok((summary, report))
}

fn execute(job: &Job, corpus: &Dataset, settings: &RunSettings) -> RunResult {
    let outcome = catch_unwind(AssertUnwindSafe(|| run_job(job, corpus, settings)))
        .unwrap_or_else(|p| Err(Error::Domain(format!("run panicked: {}", panic_message(p)))));
    match outcome {
        Ok((summary, report)) => RunResult {
            key: job.key,
            outcome: Ok(summary),
            report: Some(report),
        },
        Err(e) => {
            log::warn!("{} {:?} seed {} failed: {e}", job.key.model(), job.key.value, job.key.seed);
            RunResult {
                key: job.key,
                outcome: Err(e.to_string()),
                report: None,
            }
        }
    }
}

/// Trains every `(value, arch, variant, seed)` combination on `corpus`.
/// Failed runs become rows with an error status.
pub fn run_sweep(spec: &SweepSpec, corpus: &Dataset) -> Result<ResultTable> {
    spec.validate()?;
    let s = &spec.settings;
    let mut jobs = Vec::new();
    for &value in &spec.values {
        for &arch in &spec.archs {
            for &variant in &spec.variants {
                for &seed in &spec.seeds {
                    let mut train = TrainConfig {
                        variant,
                        seed,
                        ..s.train.clone()
                    };
                    let mut experiment = spec.experiment;
                    let mut noise_level = s.noise_level;
                    match spec.axis {
                        Axis::Lambda => train.lambda = value,
                        Axis::InitScale => train.init_scale = value,
                        Axis::Noise => noise_level = value,
                        Axis::MemoryLen => train.memory_len = value as usize,
                        Axis::FracOrder => train.alpha = FracOrder::new(value)?,
                        Axis::CycleRotation => experiment = value as u8,
                    }
                    let net = NetworkConfig {
                        window_len: train.window_len,
                        ..NetworkConfig::new(arch, s.hidden_dims.clone())
                    };
                    jobs.push(Job {
                        key: RunKey {
                            value,
                            arch,
                            variant,
                            seed,
                        },
                        train,
                        net,
                        experiment,
                        noise_level,
                    });
                }
            }
        }
    }
    let runs = s
        .pool()?
        .install(|| jobs.par_iter().map(|j| execute(j, corpus, s)).collect());
    Ok(ResultTable { axis: spec.axis, runs })
}

/// MAE and MSE for every model at every temperature of one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTable {
    pub experiment: u8,
    pub test_kind: CycleKind,
    pub temperatures: Vec<f64>,
    pub models: Vec<String>,
    /// `cells[temperature][model]`, averaged over seeds; `None` if every seed failed.
    pub cells: Vec<Vec<Option<(f64, f64)>>>,
    pub runs: Vec<RunResult>,
}

impl ProtocolTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv_writer();
        w.write_record(["experiment", "test_kind", "temp_c", "model", "mae", "mse"])?;
        for (ti, t) in self.temperatures.iter().enumerate() {
            for (mi, m) in self.models.iter().enumerate() {
                let (mae, mse) = match self.cells[ti][mi] {
                    Some((a, b)) => (sci(a), sci(b)),
                    None => (String::new(), String::new()),
                };
                w.write_record([
                    self.experiment.to_string(),
                    self.test_kind.to_string(),
                    t.to_string(),
                    m.clone(),
                    mae,
                    mse,
                ])?;
            }
        }
        finish_csv(w)
    }

    /// Temperature rows, two columns (MAE, MSE) per model.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("Experiment {} (test: {})\n\n| Temp (°C) |", self.experiment, self.test_kind);
        for m in &self.models {
            s.push_str(&format!(" {m} MAE | {m} MSE |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|---|".repeat(self.models.len()));
        s.push('\n');
        for (ti, t) in self.temperatures.iter().enumerate() {
            s.push_str(&format!("| {t} |"));
            for cell in &self.cells[ti] {
                match cell {
                    Some((mae, mse)) => s.push_str(&format!(" {mae:.4} | {mse:.3e} |")),
                    None => s.push_str(" failed | failed |"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Writes `results.csv`, `results.md` and one `report.csv` per run.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), self.to_csv()?)?;
        fs::write(dir.join("results.md"), self.to_markdown())?;
        for r in &self.runs {
            if let Some(report) = &r.report {
                let run_dir = dir.join("runs").join(r.key.model()).join(format!("seed-{}", r.key.seed));
                fs::create_dir_all(&run_dir)?;
                report.save_csv(run_dir.join("report.csv"))?;
            }
        }
        Ok(())
    }
}

/// Trains the three architectures, plain and physics-informed, on one
/// built-in partition and scores each on the held-out kind per temperature.
pub fn run_paper_protocol(
    corpus: &Dataset,
    experiment_id: u8,
    settings: &RunSettings,
    seeds: &[u64],
) -> Result<ProtocolTable> {
    if seeds.is_empty() {
        return Err(Error::Config("protocol needs at least one seed".into()));
    }
    let plan = PartitionPlan::experiment(experiment_id)?;
    let noisy;
    let corpus = if settings.noise_level > 0.0 {
        noisy = add_noise(corpus, &NoiseSpec::inputs(settings.noise_kind, settings.noise_level, seeds[0]))?;
        &noisy
    } else {
        corpus
    };
    let (train_all, test) = partition(corpus, &plan)?;
    let (train_set, val_set) = split_validation(&train_all, settings.validation_fraction);
    let test_kind = plan.test_kinds[0];

    let mut models = Vec::new();
    let mut jobs = Vec::new();
    for variant in Variant::ALL {
        for arch in Arch::ALL {
            models.push(model_name(arch, variant));
            for &seed in seeds {
                jobs.push((arch, variant, seed));
            }
        }
    }

    let physics = settings.physics(&settings.train)?;
    let trained: Vec<(RunKey, Result<(TrainedModel, TrainReport)>)> = settings.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(arch, variant, seed)| {
                let cfg = TrainConfig {
                    variant,
                    seed,
                    ..settings.train.clone()
                };
                let net = NetworkConfig {
                    window_len: cfg.window_len,
                    ..NetworkConfig::new(arch, settings.hidden_dims.clone())
                };
                let key = RunKey {
                    value: f64::from(experiment_id),
                    arch,
                    variant,
                    seed,
                };
                let out = catch_unwind(AssertUnwindSafe(|| train(&cfg, &net, &train_set, &val_set, &physics)))
                    .unwrap_or_else(|p| Err(Error::Domain(format!("run panicked: {}", panic_message(p)))));
                (key, out)
            })
            .collect()
    });

    let mut sums = vec![vec![(0.0, 0.0, 0usize); models.len()]; plan.temperatures.len()];
    let mut runs = Vec::new();
    for (key, out) in trained {
        let mi = models.iter().position(|m| *m == key.model()).expect("listed");
        let scored = out.and_then(|(model, report)| {
            let lw = TrainConfig {
                variant: key.variant,
                ..settings.train.clone()
            }
            .loss_weights();
            let (metrics, losses) = evaluate(&model, &test, &physics, lw)?;
            let mut per_temp = Vec::new();
            for (ti, &temp) in plan.temperatures.iter().enumerate() {
                let cycle = test.get(test_kind, temp).expect("partition covers every temperature");
                let one = Dataset::from_cycles([cycle.clone()])?;
                let (m, _) = evaluate(&model, &one, &physics, lw)?;
                per_temp.push((ti, m));
            }
            Ok((metrics, losses, report, per_temp))
        });
        match scored {
            Ok((metrics, losses, report, per_temp)) => {
                for (ti, m) in per_temp {
                    let cell = &mut sums[ti][mi];
                    cell.0 += m.mae;
                    cell.1 += m.mse;
                    cell.2 += 1;
                }
                runs.push(RunResult {
                    key,
                    outcome: Ok(RunSummary {
                        metrics,
                        losses,
                        clip_events: report.clip_events(),
                    }),
                    report: Some(report),
                });
            }
            Err(e) => {
                log::warn!("{} seed {} failed: {e}", key.model(), key.seed);
                runs.push(RunResult {
                    key,
                    outcome: Err(e.to_string()),
                    report: None,
                });
            }
        }
    }
    let cells = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(a, b, n)| (n > 0).then(|| (a / n as f64, b / n as f64)))
                .collect()
        })
        .collect();
    Ok(ProtocolTable {
        experiment: experiment_id,
        test_kind,
        temperatures: plan.temperatures,
        models,
        cells,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> Dataset {
        synthetic_corpus(&CorpusConfig {
            kinds: CycleKind::DRIVE.to_vec(),
            cycle_seconds: 60.0,
            ..CorpusConfig::default()
        })
        .unwrap()
    }

    fn tiny_settings() -> RunSettings {
        RunSettings {
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            hidden_dims: vec![4],
            ..RunSettings::default()
        }
    }

    #[test]
    fn axis_parsing_and_checks() {
        for a in ["lambda", "init_scale", "noise", "memory_len", "frac_order", "cycle_rotation"] {
            assert_eq!(a.parse::<Axis>().unwrap().as_str(), a);
        }
        assert!("lr".parse::<Axis>().is_err());
        assert!(Axis::MemoryLen.check(2.5).is_err());
        assert!(Axis::FracOrder.check(1.5).is_err());
        assert!(Axis::CycleRotation.check(6.0).is_err());
        assert!(Axis::Lambda.check(-1.0).is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let spec = SweepSpec::new(Axis::Lambda, vec![]);
        assert!(run_sweep(&spec, &tiny_corpus()).is_err());
    }

    #[test]
    fn lambda_zero_sweep_matches_plain() {
        let spec = SweepSpec {
            archs: vec![Arch::Mlp],
            seeds: vec![1],
            settings: tiny_settings(),
            ..SweepSpec::new(Axis::Lambda, vec![0.0])
        };
        let table = run_sweep(&spec, &tiny_corpus()).unwrap();
        assert_eq!(table.runs.len(), 2);
        let a = table.runs[0].outcome.as_ref().unwrap();
        let b = table.runs[1].outcome.as_ref().unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn failed_runs_are_rows_not_errors() {
        // memory_len 25 >= window 20 makes every physics-informed run fail.
        let spec = SweepSpec {
            archs: vec![Arch::Mlp],
            seeds: vec![1, 2],
            settings: tiny_settings(),
            ..SweepSpec::new(Axis::MemoryLen, vec![5.0, 25.0])
        };
        let table = run_sweep(&spec, &tiny_corpus()).unwrap();
        assert_eq!(table.runs.len(), 8);
        let failed: Vec<_> = table.runs.iter().filter(|r| r.outcome.is_err()).collect();
        assert_eq!(failed.len(), 2);
        assert!(failed.iter().all(|r| r.key.value == 25.0 && r.key.variant == Variant::FdiffPinn));
        let csv = table.to_csv().unwrap();
        assert_eq!(csv.lines().filter(|l| l.contains(",failed,")).count(), 2);
        let aggs = table.aggregates();
        assert_eq!(aggs.len(), 4);
        assert!(aggs.iter().any(|a| a.ok == 0 && a.mean.is_none()));
        assert!(table.to_markdown().contains("Failed runs"));
    }

    #[test]
    fn aggregates_are_mean_and_max() {
        let mk = |seed, mae: f64| RunResult {
            key: RunKey {
                value: 0.5,
                arch: Arch::Rnn,
                variant: Variant::FdiffPinn,
                seed,
            },
            outcome: Ok(RunSummary {
                metrics: MetricReport {
                    mae,
                    mse: mae * mae,
                    rmse: mae,
                    n: 1,
                },
                losses: LossBreakdown::default(),
                clip_events: 0,
            }),
            report: None,
        };
        let t = ResultTable {
            axis: Axis::Lambda,
            runs: vec![mk(1, 0.1), mk(2, 0.3), mk(3, 0.2)],
        };
        let a = &t.aggregates()[0];
        assert_eq!(a.ok, 3);
        assert!((a.mean.unwrap().mae - 0.2).abs() < 1e-15);
        assert_eq!(a.max.unwrap().mae, 0.3);
    }
}
