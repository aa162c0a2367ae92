//! Command options. Every flag has a key of the same name in the TOML
//! config file (`[sweep]`, `[protocol]`, `[synth]` tables); flags win.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use super::{synthetic_corpus, Axis, CorpusConfig, RunSettings, SweepSpec};
use crate::battery_model::BatteryParams;
use crate::data::{
    load_dir, synth_cycle, CycleKind, Dataset, NoiseKind, SocRange, SynthProfile, SynthSettings, TEMPERATURES,
};
use crate::error::{Error, Result};
use crate::frac_calc::FracOrder;
use crate::nn::Arch;
use crate::training::{TrainConfig, Variant};

/// Copies every `None` field of `$flags` from `$file`.
macro_rules! overlay {
    ($flags:expr, $file:expr; $($f:ident),* $(,)?) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f.take(); } )*
    };
}

/// Training, data and output options shared by `sweep` and `protocol`.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
pub struct CommonOptions {
    /// Directory of cycle CSVs; a synthetic corpus is generated when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Length of generated cycles in seconds.
    #[arg(long)]
    pub cycle_seconds: Option<f64>,
    #[arg(long)]
    pub corpus_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_final_fraction: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub memory_len: Option<usize>,
    /// Fractional order used by the physics loss and the generated corpus.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub noise_kind: Option<NoiseKind>,
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonOptions {
    fn overlay(&mut self, mut file: Self) {
        overlay!(self, file; corpus, cycle_seconds, corpus_seed, out, epochs, learning_rate,
            lr_final_fraction, lambda, memory_len, alpha, window_len, batch_size, init_scale,
            grad_clip, hidden, validation_fraction, noise_kind, noise_level, workers);
    }

    fn alpha(&self) -> Result<FracOrder> {
        self.alpha.map_or(Ok(FracOrder::ONE), FracOrder::new)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn settings(&self) -> Result<RunSettings> {
        let d = RunSettings::default();
        let t = TrainConfig::default();
        let train = TrainConfig {
            epochs: self.epochs.unwrap_or(t.epochs),
            learning_rate: self.learning_rate.unwrap_or(t.learning_rate),
            lr_final_fraction: self.lr_final_fraction.unwrap_or(t.lr_final_fraction),
            lambda: self.lambda.unwrap_or(t.lambda),
            memory_len: self.memory_len.unwrap_or(t.memory_len),
            alpha: self.alpha()?,
            window_len: self.window_len.unwrap_or(t.window_len),
            batch_size: self.batch_size.unwrap_or(t.batch_size),
            init_scale: self.init_scale.unwrap_or(t.init_scale),
            grad_clip: self.grad_clip.unwrap_or(t.grad_clip),
            ..t
        };
        Ok(RunSettings {
            train,
            hidden_dims: self.hidden.clone().unwrap_or(d.hidden_dims),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            noise_kind: self.noise_kind.unwrap_or(d.noise_kind),
            noise_level: self.noise_level.unwrap_or(d.noise_level),
            workers: self.workers.unwrap_or(d.workers),
            ..d
        })
    }

    /// Loads `--corpus`, or simulates one cycle per drive kind (plus CC-CV)
    /// and temperature.
    pub fn corpus(&self) -> Result<Dataset> {
        if let Some(dir) = &self.corpus {
            return load_dir(dir);
        }
        let d = CorpusConfig::default();
        synthetic_corpus(&CorpusConfig {
            cycle_seconds: self.cycle_seconds.unwrap_or(d.cycle_seconds),
            seed: self.corpus_seed.unwrap_or(d.seed),
            battery: d.battery.clone().with_alpha(self.alpha()?),
            ..d
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
pub struct SweepOptions {
    #[arg(long)]
    pub axis: Option<Axis>,
    /// Grid values, comma separated. Defaults to the axis' standard grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub arch: Option<Vec<Arch>>,
    #[arg(long, value_delimiter = ',')]
    pub variant: Option<Vec<Variant>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Built-in partition (1-5) for axes other than cycle_rotation.
    #[arg(long)]
    pub experiment: Option<u8>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonOptions,
}

impl SweepOptions {
    pub fn overlay(&mut self, mut file: Self) {
        overlay!(self, file; axis, values, arch, variant, seeds, experiment);
        self.common.overlay(file.common);
    }

    pub fn spec(&self) -> Result<SweepSpec> {
        let axis = self
            .axis
            .ok_or_else(|| Error::Config("sweep needs an axis (flag or config)".into()))?;
        let d = SweepSpec::new(axis, axis.default_values());
        let spec = SweepSpec {
            values: self.values.clone().unwrap_or(d.values),
            archs: self.arch.clone().unwrap_or(d.archs),
            variants: self.variant.clone().unwrap_or(d.variants),
            seeds: self.seeds.clone().unwrap_or(d.seeds),
            experiment: self.experiment.unwrap_or(d.experiment),
            settings: self.common.settings()?,
            ..d
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
pub struct ProtocolOptions {
    /// Built-in partition, 1-5.
    #[arg(long)]
    pub experiment: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonOptions,
}

impl ProtocolOptions {
    pub fn overlay(&mut self, mut file: Self) {
        overlay!(self, file; experiment, seeds);
        self.common.overlay(file.common);
    }

    pub fn experiment(&self) -> u8 {
        self.experiment.unwrap_or(5)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SynthKind {
    Constant,
    Pulse,
    RandomWalk,
    /// One drive-cycle analogue per kind and temperature.
    Analogues,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
pub struct SynthOptions {
    #[arg(long, value_enum)]
    pub profile: Option<SynthKind>,
    /// Number of cycles (ignored for analogues).
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub cycle_seconds: Option<f64>,
    /// Current for constant and pulse profiles, in amperes.
    #[arg(long, allow_negative_numbers = true)]
    pub current: Option<f64>,
    #[arg(long)]
    pub soc_low: Option<f64>,
    #[arg(long)]
    pub soc_high: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub memory_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SynthOptions {
    pub fn overlay(&mut self, mut file: Self) {
        overlay!(self, file; profile, cycles, cycle_seconds, current, soc_low, soc_high, alpha,
            memory_len, seed, out);
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("corpus"))
    }

    pub fn generate(&self) -> Result<Dataset> {
        let params = BatteryParams::default().with_alpha(self.alpha.map_or(Ok(FracOrder::ONE), FracOrder::new)?);
        let d = SocRange::default();
        let soc_range = SocRange {
            low: self.soc_low.unwrap_or(d.low),
            high: self.soc_high.unwrap_or(d.high),
        };
        if !(0.0..=1.0).contains(&soc_range.low) || !(soc_range.low..=1.0).contains(&soc_range.high) {
            return Err(Error::Config(format!(
                "SOC range [{}, {}] must lie within [0, 1]",
                soc_range.low, soc_range.high
            )));
        }
        let base = SynthSettings {
            duration_s: self.cycle_seconds.unwrap_or(600.0),
            memory_len: self.memory_len.unwrap_or(10),
            ..SynthSettings::default()
        };
        let seed = self.seed.unwrap_or(1);
        let kind = self.profile.unwrap_or(SynthKind::RandomWalk);
        if kind == SynthKind::Analogues {
            let mut kinds = CycleKind::DRIVE.to_vec();
            kinds.push(CycleKind::CcCv);
            return synthetic_corpus(&CorpusConfig {
                kinds,
                cycle_seconds: base.duration_s,
                soc_range,
                seed,
                battery: params,
                ..CorpusConfig::default()
            });
        }
        let current = self.current.unwrap_or(params.capacity_c_n / 3600.0);
        let profile = match kind {
            SynthKind::Constant => SynthProfile::Constant { current_a: current },
            SynthKind::Pulse => SynthProfile::Pulse {
                amplitude_a: current,
                on_s: 30.0,
                off_s: 30.0,
            },
            _ => SynthProfile::random_walk(),
        };
        let n = self.cycles.unwrap_or(4);
        let step = (soc_range.high - soc_range.low) / n.max(2).saturating_sub(1) as f64;
        let mut ds = Dataset::new();
        for i in 0..n {
            let temp = TEMPERATURES[i % TEMPERATURES.len()];
            let settings = SynthSettings {
                name: format!("synth_{i:03}"),
                temperature_c: temp,
                ..base.clone()
            };
            let soc0 = soc_range.high - step * i as f64;
            ds.push(synth_cycle(&profile, &params, &settings, soc0, seed.wrapping_add(i as u64))?)?;
        }
        Ok(ds)
    }
}

fn flag_names<T: Args>() -> Vec<String> {
    T::augment_args(clap::Command::new("config"))
        .get_arguments()
        .map(|a| a.get_id().to_string())
        .collect()
}

/// Contents of a TOML config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub protocol: ProtocolOptions,
    #[serde(default)]
    pub synth: SynthOptions,
}

impl ConfigFile {
    /// Parses a config; unknown tables and keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (section, value) in &table {
            let known = match section.as_str() {
                "sweep" => flag_names::<SweepOptions>(),
                "protocol" => flag_names::<ProtocolOptions>(),
                "synth" => flag_names::<SynthOptions>(),
                other => return Err(Error::Config(format!("unknown config table [{other}]"))),
            };
            let keys = value
                .as_table()
                .ok_or_else(|| Error::Config(format!("[{section}] must be a table")))?
                .keys();
            let unknown: Vec<&str> = keys.map(String::as_str).filter(|k| !known.iter().any(|n| n == k)).collect();
            if !unknown.is_empty() {
                return Err(Error::Config(format!("unknown keys in [{section}]: {}", unknown.join(", "))));
            }
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
