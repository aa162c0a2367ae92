//! Drive-cycle records, CSV ingestion, synthetic cycles, normalization,
//! noise injection and leave-one-cycle-out partitioning.
//!
//! # CSV layout
//!
//! One cycle per file, UTF-8, `.` decimal separator, LF line endings:
//!
//! ```text
//! # kind=UDDS temp_c=-10
//! t_s,current_a,voltage_v,temp_c,soc_true,up_true
//! 0.0000000000000000e0,...
//! ```
//!
//! The `soc_true` and `up_true` columns are optional (`up_true` requires
//! `soc_true`). Values are written with 17 significant digits so a save/load
//! round trip is bit-exact.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::battery_model::{simulate_currents, BatteryModel, BatteryParams};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    /// Seconds since the start of the cycle.
    pub t: f64,
    /// Amperes, positive on discharge.
    pub current: f64,
    pub voltage: f64,
    /// Degrees Celsius.
    pub temperature: f64,
    pub soc_true: Option<f64>,
    pub up_true: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CycleKind {
    Udds,
    Hwfet,
    La92,
    Nn,
    Us06,
    CcCv,
    Synth,
}

impl CycleKind {
    /// The five dynamic drive cycles, in the order used by the partition tables.
    pub const DRIVE: [CycleKind; 5] = [
        CycleKind::Udds,
        CycleKind::Hwfet,
        CycleKind::La92,
        CycleKind::Nn,
        CycleKind::Us06,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CycleKind::Udds => "UDDS",
            CycleKind::Hwfet => "HWFET",
            CycleKind::La92 => "LA92",
            CycleKind::Nn => "NN",
            CycleKind::Us06 => "US06",
            CycleKind::CcCv => "CC-CV",
            CycleKind::Synth => "SYNTH",
        }
    }
}

impl fmt::Display for CycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CycleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "UDDS" => CycleKind::Udds,
            "HWFET" => CycleKind::Hwfet,
            "LA92" => CycleKind::La92,
            "NN" => CycleKind::Nn,
            "US06" => CycleKind::Us06,
            "CC-CV" | "CCCV" => CycleKind::CcCv,
            "SYNTH" => CycleKind::Synth,
            other => return Err(Error::Config(format!("unknown cycle kind {other:?}"))),
        })
    }
}

/// The paper's four test temperatures, in degrees Celsius.
pub const TEMPERATURES: [f64; 4] = [-20.0, -10.0, 0.0, 10.0];

/// One tagged, time-ordered cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub name: String,
    pub kind: CycleKind,
    pub temperature_c: f64,
    pub records: Vec<CycleRecord>,
}

impl Cycle {
    pub fn new(name: impl Into<String>, kind: CycleKind, temperature_c: f64, records: Vec<CycleRecord>) -> Self {
        Self {
            name: name.into(),
            kind,
            temperature_c,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sample spacing, taken from the first two timestamps.
    pub fn step(&self) -> Option<f64> {
        match self.records.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    /// Initial `(SOC, Up)` used as the origin of the fractional histories.
    /// `Up` defaults to 0 (cell at rest) when the cycle carries no label.
    pub fn origin(&self) -> Option<(f64, f64)> {
        let first = self.records.first()?;
        Some((first.soc_true?, first.up_true.unwrap_or(0.0)))
    }

    pub fn soc_labels(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.soc_true).collect()
    }

    fn validate(&self) -> Result<()> {
        for (i, pair) in self.records.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return domain(format!("cycle {}: time not increasing at record {}", self.name, i + 1));
            }
        }
        Ok(())
    }
}

/// Ordered collection of cycles with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    cycles: Vec<Cycle>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cycles(cycles: impl IntoIterator<Item = Cycle>) -> Result<Self> {
        let mut ds = Self::new();
        for c in cycles {
            ds.push(c)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, cycle: Cycle) -> Result<()> {
        cycle.validate()?;
        if self.cycles.iter().any(|c| c.name == cycle.name) {
            return domain(format!("duplicate cycle name {:?}", cycle.name));
        }
        self.cycles.push(cycle);
        Ok(())
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn get(&self, kind: CycleKind, temperature_c: f64) -> Option<&Cycle> {
        self.cycles
            .iter()
            .find(|c| c.kind == kind && c.temperature_c == temperature_c)
    }

    pub fn records(&self) -> impl Iterator<Item = &CycleRecord> {
        self.cycles.iter().flat_map(|c| c.records.iter())
    }

    fn map_records(&self, mut f: impl FnMut(usize, &CycleRecord) -> CycleRecord) -> Dataset {
        let cycles = self
            .cycles
            .iter()
            .enumerate()
            .map(|(ci, c)| Cycle {
                records: c.records.iter().map(|r| f(ci, r)).collect(),
                ..c.clone()
            })
            .collect();
        Dataset { cycles }
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_meta(path: &Path, line: &str) -> Result<(CycleKind, f64)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, 1, "missing `# kind=<KIND> temp_c=<T>` header"))?;
    let mut kind = None;
    let mut temp = None;
    for token in body.split_whitespace() {
        match token.split_once('=') {
            Some(("kind", v)) => kind = Some(v.parse::<CycleKind>().map_err(|e| parse_err(path, 1, e.to_string()))?),
            Some(("temp_c", v)) => {
                temp = Some(
                    v.parse::<f64>()
                        .map_err(|_| parse_err(path, 1, format!("bad temperature {v:?}")))?,
                )
            }
            _ => return Err(parse_err(path, 1, format!("unexpected header token {token:?}"))),
        }
    }
    match (kind, temp) {
        (Some(k), Some(t)) => Ok((k, t)),
        _ => Err(parse_err(path, 1, "header needs both kind= and temp_c=")),
    }
}

const BASE_COLUMNS: [&str; 4] = ["t_s", "current_a", "voltage_v", "temp_c"];

/// Loads one cycle file. The cycle name is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let (meta, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let (kind, temperature_c) = parse_meta(path, meta)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let n_cols = names.len();
    let expected: Vec<&str> = BASE_COLUMNS
        .iter()
        .copied()
        .chain(["soc_true", "up_true"])
        .take(n_cols)
        .collect();
    if !(4..=6).contains(&n_cols) || names != expected {
        return Err(parse_err(
            path,
            2,
            format!("columns {names:?} do not match t_s,current_a,voltage_v,temp_c[,soc_true,up_true]"),
        ));
    }

    let mut records = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        if row.len() != n_cols {
            return Err(parse_err(path, line, format!("expected {n_cols} fields, got {}", row.len())));
        }
        let mut vals = [0.0; 6];
        for (k, field) in row.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: not a number: {field:?}", names[k])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", names[k])));
            }
            vals[k] = v;
        }
        if vals[0] <= prev_t {
            return Err(parse_err(path, line, format!("time {} does not increase", vals[0])));
        }
        prev_t = vals[0];
        records.push(CycleRecord {
            t: vals[0],
            current: vals[1],
            voltage: vals[2],
            temperature: vals[3],
            soc_true: (n_cols >= 5).then_some(vals[4]),
            up_true: (n_cols >= 6).then_some(vals[5]),
        });
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("{kind}_{temperature_c}"));
    Dataset::from_cycles([Cycle::new(name, kind, temperature_c, records)])
}

/// Writes one cycle in the documented CSV layout.
pub fn save_csv(cycle: &Cycle, path: impl AsRef<Path>) -> Result<()> {
    let has_soc = cycle.records.iter().all(|r| r.soc_true.is_some()) && !cycle.is_empty();
    let has_up = has_soc && cycle.records.iter().all(|r| r.up_true.is_some());

    let mut out = format!("# kind={} temp_c={}\n", cycle.kind, cycle.temperature_c).into_bytes();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
        if has_soc {
            header.push("soc_true");
        }
        if has_up {
            header.push("up_true");
        }
        w.write_record(&header)?;
        for r in &cycle.records {
            let mut row = vec![fmt17(r.t), fmt17(r.current), fmt17(r.voltage), fmt17(r.temperature)];
            if let (true, Some(s)) = (has_soc, r.soc_true) {
                row.push(fmt17(s));
            }
            if let (true, Some(u)) = (has_up, r.up_true) {
                row.push(fmt17(u));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads every `*.csv` in `dir`, sorted by file name.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut ds = Dataset::new();
    for p in paths {
        for c in load_csv(&p)?.cycles {
            ds.push(c)?;
        }
    }
    Ok(ds)
}

/// Writes each cycle to `dir/<name>.csv`.
pub fn save_dir(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    fs::create_dir_all(dir.as_ref())?;
    for c in dataset.cycles() {
        save_csv(c, dir.as_ref().join(format!("{}.csv", c.name)))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Input channels, in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Voltage,
    Current,
    Temperature,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Voltage, Channel::Current, Channel::Temperature];

    fn index(self) -> usize {
        self as usize
    }

    fn get(self, r: &CycleRecord) -> f64 {
        match self {
            Channel::Voltage => r.voltage,
            Channel::Current => r.current,
            Channel::Temperature => r.temperature,
        }
    }

    fn set(self, r: &mut CycleRecord, v: f64) {
        match self {
            Channel::Voltage => r.voltage = v,
            Channel::Current => r.current = v,
            Channel::Temperature => r.temperature = v,
        }
    }
}

/// Per-channel min-max scaling fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Normalizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut n = 0usize;
        for r in train.records() {
            for ch in Channel::ALL {
                let v = ch.get(r);
                min[ch.index()] = min[ch.index()].min(v);
                max[ch.index()] = max[ch.index()].max(v);
            }
            n += 1;
        }
        if n == 0 {
            return domain("cannot fit a normalizer on an empty split");
        }
        for ch in Channel::ALL {
            if min[ch.index()] == max[ch.index()] {
                log::warn!("{ch:?} is constant in the training split; it will normalize to 0");
            }
        }
        Ok(Self { min, max })
    }

    fn span(&self, ch: Channel) -> f64 {
        self.max[ch.index()] - self.min[ch.index()]
    }

    pub fn scale(&self, ch: Channel, x: f64) -> f64 {
        let span = self.span(ch);
        if span == 0.0 {
            0.0
        } else {
            (x - self.min[ch.index()]) / span
        }
    }

    /// Inverse of [`Normalizer::scale`]. A degenerate channel maps back to its constant.
    pub fn unscale(&self, ch: Channel, z: f64) -> f64 {
        self.min[ch.index()] + z * self.span(ch)
    }

    /// Normalized `[voltage, current, temperature]` features of one record.
    pub fn features(&self, r: &CycleRecord) -> [f64; 3] {
        Channel::ALL.map(|ch| self.scale(ch, ch.get(r)))
    }

    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        dataset.map_records(|_, r| {
            let mut out = *r;
            for ch in Channel::ALL {
                ch.set(&mut out, self.scale(ch, ch.get(r)));
            }
            out
        })
    }

    pub fn invert(&self, dataset: &Dataset) -> Dataset {
        dataset.map_records(|_, r| {
            let mut out = *r;
            for ch in Channel::ALL {
                ch.set(&mut out, self.unscale(ch, ch.get(r)));
            }
            out
        })
    }
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    UniformRandom,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform_random" | "random" | "uniform" => Ok(NoiseKind::UniformRandom),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation (gaussian) or half-width (uniform) in normalized units.
    pub level: f64,
    pub channels: Vec<Channel>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn inputs(kind: NoiseKind, level: f64, seed: u64) -> Self {
        Self {
            kind,
            level,
            channels: Channel::ALL.to_vec(),
            seed,
        }
    }
}

/// Adds noise to the selected input channels. Labels are never touched.
///
/// `level` is expressed on the normalized scale: each channel's noise is
/// multiplied by that channel's min-max span over `dataset`.
pub fn add_noise(dataset: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    if spec.channels.is_empty() {
        return domain("noise spec selects no channels");
    }
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return domain(format!("noise level {} must be non-negative", spec.level));
    }
    if spec.level == 0.0 || dataset.is_empty() {
        return Ok(dataset.clone());
    }
    let spans = Normalizer::fit(dataset)?;
    let mut rngs: Vec<ChaCha8Rng> = (0..dataset.len())
        .map(|ci| ChaCha8Rng::seed_from_u64(spec.seed ^ (ci as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect();
    let gauss = Normal::new(0.0, spec.level).map_err(|e| Error::Domain(e.to_string()))?;
    let unif = Uniform::new_inclusive(-spec.level, spec.level).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dataset.map_records(|ci, r| {
        let rng = &mut rngs[ci];
        let mut out = *r;
        for &ch in &spec.channels {
            let z = match spec.kind {
                NoiseKind::Gaussian => gauss.sample(rng),
                NoiseKind::UniformRandom => unif.sample(rng),
            };
            ch.set(&mut out, ch.get(r) + z * spans.span(ch));
        }
        out
    }))
}

// ---------------------------------------------------------------------------
// Initial SOC and synthetic cycles
// ---------------------------------------------------------------------------

/// Range for random initial SOC draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocRange {
    pub low: f64,
    pub high: f64,
}

impl Default for SocRange {
    fn default() -> Self {
        Self { low: 0.2, high: 1.0 }
    }
}

pub fn sample_initial_soc(rng: &mut impl Rng, range: SocRange) -> f64 {
    rng.random_range(range.low..=range.high)
}

/// Current profiles for synthetic cycles. C-rates are relative to the cell capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum SynthProfile {
    Constant {
        current_a: f64,
    },
    /// Square pulses: `on_s` at `amplitude_a`, then `off_s` at rest.
    Pulse {
        amplitude_a: f64,
        on_s: f64,
        off_s: f64,
    },
    /// Mean-reverting random walk in C-rate, clipped to `[min_c, max_c]`.
    RandomWalk {
        mean_c: f64,
        sigma_c: f64,
        reversion: f64,
        min_c: f64,
        max_c: f64,
    },
}

impl SynthProfile {
    pub fn random_walk() -> Self {
        SynthProfile::RandomWalk {
            mean_c: 0.5,
            sigma_c: 0.15,
            reversion: 0.05,
            min_c: -1.0,
            max_c: 2.0,
        }
    }

    /// Stand-in profile for a drive-cycle kind: distinct intensity and
    /// roughness per kind, not a reproduction of the real schedules.
    pub fn analogue(kind: CycleKind, capacity_c_n: f64) -> Self {
        let rw = |mean_c, sigma_c, reversion, min_c, max_c| SynthProfile::RandomWalk {
            mean_c,
            sigma_c,
            reversion,
            min_c,
            max_c,
        };
        match kind {
            CycleKind::Udds => rw(0.35, 0.12, 0.08, -0.5, 1.5),
            CycleKind::Hwfet => rw(0.6, 0.05, 0.03, 0.0, 1.5),
            CycleKind::La92 => rw(0.5, 0.18, 0.06, -0.8, 2.0),
            CycleKind::Nn => rw(0.45, 0.14, 0.05, -0.6, 1.8),
            CycleKind::Us06 => rw(0.8, 0.3, 0.1, -1.2, 3.0),
            CycleKind::CcCv => SynthProfile::Constant {
                current_a: 3.0 * capacity_c_n / 10800.0,
            },
            CycleKind::Synth => Self::random_walk(),
        }
    }

    fn currents(&self, n: usize, t_s: f64, capacity_c_n: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            SynthProfile::Constant { current_a } => vec![current_a; n],
            SynthProfile::Pulse { amplitude_a, on_s, off_s } => {
                let on = (on_s / t_s).round().max(1.0) as usize;
                let off = (off_s / t_s).round() as usize;
                (0..n)
                    .map(|k| if k % (on + off) < on { amplitude_a } else { 0.0 })
                    .collect()
            }
            SynthProfile::RandomWalk {
                mean_c,
                sigma_c,
                reversion,
                min_c,
                max_c,
            } => {
                let one_c = capacity_c_n / 3600.0;
                let noise = Normal::new(0.0, sigma_c).expect("finite sigma");
                let mut c = mean_c;
                (0..n)
                    .map(|_| {
                        c += reversion * (mean_c - c) + noise.sample(rng);
                        c = c.clamp(min_c, max_c);
                        c * one_c
                    })
                    .collect()
            }
        }
    }
}

/// Sampling and tagging options for [`synth_cycle`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub name: String,
    pub kind: CycleKind,
    pub duration_s: f64,
    pub t_s: f64,
    pub memory_len: usize,
    pub temperature_c: f64,
    /// The cycle must be longer than this many samples.
    pub window_len: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            kind: CycleKind::Synth,
            duration_s: 600.0,
            t_s: 1.0,
            memory_len: 10,
            temperature_c: 0.0,
            window_len: 20,
        }
    }
}

/// Generates one labelled cycle by running the fractional cell model.
pub fn synth_cycle(
    profile: &SynthProfile,
    params: &BatteryParams,
    settings: &SynthSettings,
    soc0: f64,
    seed: u64,
) -> Result<Cycle> {
    if settings.duration_s <= settings.window_len as f64 * settings.t_s {
        return domain(format!(
            "duration {} s is not longer than one window ({} samples of {} s)",
            settings.duration_s, settings.window_len, settings.t_s
        ));
    }
    let model = BatteryModel::new(params.clone(), settings.memory_len, settings.t_s)?;
    let n = (settings.duration_s / settings.t_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let currents = profile.currents(n, settings.t_s, params.capacity_c_n, &mut rng);
    let trace = simulate_currents(&model, &currents, soc0, settings.temperature_c)?;
    if trace.saturated {
        log::warn!("synthetic cycle {} saturated SOC", settings.name);
    }
    Ok(Cycle::new(
        settings.name.clone(),
        settings.kind,
        settings.temperature_c,
        trace.records,
    ))
}

/// Builds a corpus with one analogue cycle per `(kind, temperature)`.
/// Initial SOC is drawn per cycle from `soc_range`.
pub fn synth_corpus(
    kinds: &[CycleKind],
    temperatures: &[f64],
    params: &BatteryParams,
    base: &SynthSettings,
    soc_range: SocRange,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new();
    for &kind in kinds {
        for &temp in temperatures {
            let soc0 = sample_initial_soc(&mut rng, soc_range);
            let cycle_seed: u64 = rng.random();
            let settings = SynthSettings {
                name: format!("{kind}_{temp}"),
                kind,
                temperature_c: temp,
                ..base.clone()
            };
            let profile = SynthProfile::analogue(kind, params.capacity_c_n);
            ds.push(synth_cycle(&profile, params, &settings, soc0, cycle_seed)?)?;
        }
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// Leave-one-cycle-kind-out split across a set of temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub train_kinds: Vec<CycleKind>,
    pub test_kinds: Vec<CycleKind>,
    pub temperatures: Vec<f64>,
}

impl PartitionPlan {
    /// Built-in rotations 1..=5.
    pub fn experiment(id: u8) -> Result<Self> {
        use CycleKind::*;
        let (train, test) = match id {
            1 => (vec![CcCv], vec![Hwfet]),
            2 => (vec![Nn, Hwfet, Udds, Us06], vec![La92]),
            3 => (vec![Hwfet, La92, Udds, Us06], vec![Nn]),
            4 => (vec![Hwfet, La92, Nn, Us06], vec![Udds]),
            5 => (vec![Hwfet, La92, Udds, Nn], vec![Us06]),
            other => return Err(Error::Plan(format!("no built-in experiment {other}"))),
        };
        Ok(Self {
            train_kinds: train,
            test_kinds: test,
            temperatures: TEMPERATURES.to_vec(),
        })
    }
}

/// Splits `dataset` into `(train, test)` by cycle kind.
pub fn partition(dataset: &Dataset, plan: &PartitionPlan) -> Result<(Dataset, Dataset)> {
    if let Some(k) = plan.train_kinds.iter().find(|k| plan.test_kinds.contains(k)) {
        return Err(Error::Plan(format!("{k} appears in both train and test")));
    }
    if plan.train_kinds.is_empty() || plan.test_kinds.is_empty() {
        return Err(Error::Plan("train and test kinds must be non-empty".into()));
    }
    let pick = |kinds: &[CycleKind]| -> Result<Dataset> {
        let mut out = Dataset::new();
        for &kind in kinds {
            for &temp in &plan.temperatures {
                let c = dataset
                    .get(kind, temp)
                    .ok_or_else(|| Error::Plan(format!("corpus has no {kind} cycle at {temp} °C")))?;
                out.push(c.clone())?;
            }
        }
        Ok(out)
    };
    Ok((pick(&plan.train_kinds)?, pick(&plan.test_kinds)?))
}

/// Holds out every `round(1 / fraction)`-th cycle for validation.
/// Returns the input unchanged (and an empty validation set) when that would
/// leave no training cycles.
pub fn split_validation(dataset: &Dataset, fraction: f64) -> (Dataset, Dataset) {
    if fraction <= 0.0 || dataset.len() < 2 {
        return (dataset.clone(), Dataset::new());
    }
    let period = (1.0 / fraction).round().max(2.0) as usize;
    let (mut train, mut val) = (Dataset::new(), Dataset::new());
    for (i, c) in dataset.cycles().iter().enumerate() {
        if i % period == period - 1 {
            val.cycles.push(c.clone());
        } else {
            train.cycles.push(c.clone());
        }
    }
    (train, val)
}
