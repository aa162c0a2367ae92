//! Small dense networks with hand-derived reverse-mode gradients.
//!
//! Every architecture maps a `window_len x input_dim` window to two scalar
//! heads, `[soc, up]`. Parameters live in one flat `f64` buffer described by
//! a [`Layout`]; gradients share that layout, which keeps the optimizer,
//! clipping and checkpointing architecture-agnostic.

mod adam;
mod checkpoint;
mod lstm;
mod mlp;
mod rnn;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Rnn,
    Lstm,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Mlp, Arch::Rnn, Arch::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Mlp => "MLP",
            Arch::Rnn => "RNN",
            Arch::Lstm => "LSTM",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u8) -> Option<Self> {
        Arch::ALL.into_iter().find(|a| a.code() == code)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Arch::Mlp),
            "rnn" => Ok(Arch::Rnn),
            "lstm" => Ok(Arch::Lstm),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Number of output heads: SOC and polarization voltage.
pub const OUTPUT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub arch: Arch,
    pub input_dim: usize,
    /// Hidden widths. The MLP may have none (a single affine map); the
    /// recurrent architectures need at least one.
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub window_len: usize,
}

impl NetworkConfig {
    pub fn new(arch: Arch, hidden_dims: Vec<usize>) -> Self {
        Self {
            arch,
            hidden_dims,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.window_len == 0 {
            return domain("input_dim and window_len must be at least 1");
        }
        if self.output_dim != OUTPUT_DIM {
            return domain(format!("output_dim must be {OUTPUT_DIM} (SOC and Up heads)"));
        }
        if self.hidden_dims.contains(&0) {
            return domain("hidden widths must be at least 1");
        }
        if self.arch != Arch::Mlp && self.hidden_dims.is_empty() {
            return domain(format!("{} needs at least one hidden layer", self.arch));
        }
        Ok(())
    }

    pub fn window_size(&self) -> usize {
        self.window_len * self.input_dim
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Mlp,
            input_dim: 3,
            hidden_dims: vec![32],
            output_dim: OUTPUT_DIM,
            window_len: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered tensor list for a config.
///
/// * MLP: `dense{l}.w`, `dense{l}.b` per layer, the last layer being the head.
/// * RNN: `rnn{l}.wx`, `rnn{l}.wh`, `rnn{l}.b` per layer, then `head.w`, `head.b`.
/// * LSTM: for each layer and gate in `f, i, o, g`: `.wx`, `.wh`, `.b`; then the head.
///
/// Weight matrices are row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    total: usize,
}

pub(crate) const LSTM_GATES: [&str; 4] = ["f", "i", "o", "g"];

impl Layout {
    pub fn for_config(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut b = LayoutBuilder::default();
        match config.arch {
            Arch::Mlp => {
                let mut fan_in = config.window_size();
                let widths = config.hidden_dims.iter().copied().chain([OUTPUT_DIM]);
                for (l, out) in widths.enumerate() {
                    b.weight(format!("dense{l}.w"), out, fan_in);
                    b.bias(format!("dense{l}.b"), out);
                    fan_in = out;
                }
            }
            Arch::Rnn => {
                let mut fan_in = config.input_dim;
                for (l, &h) in config.hidden_dims.iter().enumerate() {
                    b.weight(format!("rnn{l}.wx"), h, fan_in);
                    b.weight(format!("rnn{l}.wh"), h, h);
                    b.bias(format!("rnn{l}.b"), h);
                    fan_in = h;
                }
                b.weight("head.w".into(), OUTPUT_DIM, fan_in);
                b.bias("head.b".into(), OUTPUT_DIM);
            }
            Arch::Lstm => {
                let mut fan_in = config.input_dim;
                for (l, &h) in config.hidden_dims.iter().enumerate() {
                    for g in LSTM_GATES {
                        b.weight(format!("lstm{l}.{g}.wx"), h, fan_in);
                        b.weight(format!("lstm{l}.{g}.wh"), h, h);
                        b.bias(format!("lstm{l}.{g}.b"), h);
                    }
                    fan_in = h;
                }
                b.weight("head.w".into(), OUTPUT_DIM, fan_in);
                b.bias("head.b".into(), OUTPUT_DIM);
            }
        }
        Ok(Layout {
            tensors: b.tensors,
            total: b.offset,
        })
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn at(&self, i: usize) -> &TensorSpec {
        &self.tensors[i]
    }
}

#[derive(Default)]
struct LayoutBuilder {
    tensors: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, rows: usize, cols: usize, role: TensorRole) {
        self.tensors.push(TensorSpec {
            name,
            rows,
            cols,
            offset: self.offset,
            role,
        });
        self.offset += rows * cols;
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize) {
        self.push(name, rows, cols, TensorRole::Weight);
    }

    fn bias(&mut self, name: String, rows: usize) {
        self.push(name, rows, 1, TensorRole::Bias);
    }
}

/// Network weights in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layout: Layout,
    values: Vec<f64>,
    /// Bumped on every in-place update; forward caches remember it.
    generation: u64,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let layout = Layout::for_config(config)?;
        Ok(Self {
            config: config.clone(),
            values: vec![0.0; layout.param_count()],
            layout,
            generation: 0,
        })
    }

    pub fn from_values(config: &NetworkConfig, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return domain(format!(
                "expected {} parameters, got {}",
                p.values.len(),
                values.len()
            ));
        }
        p.values = values;
        Ok(p)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the raw buffer. Invalidates outstanding caches.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|t| &self.values[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.find(name)?.range();
        self.generation += 1;
        Some(&mut self.values[range])
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    fn slice(&self, index: usize) -> &[f64] {
        &self.values[self.layout.at(index).range()]
    }
}

/// Gradient buffer with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            values: vec![0.0; params.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|g| *g *= k);
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }

    fn slice_mut(&mut self, layout: &Layout, index: usize) -> &mut [f64] {
        &mut self.values[layout.at(index).range()]
    }
}

/// Draws every weight from `U(-scale, scale)`; biases start at zero.
pub fn init_params(config: &NetworkConfig, seed: u64, scale: f64) -> Result<NetworkParams> {
    if !(scale.is_finite() && scale > 0.0) {
        return domain(format!("init scale {scale} must be positive"));
    }
    let mut params = NetworkParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-scale, scale).map_err(|e| Error::Domain(e.to_string()))?;
    for t in params.layout.tensors.clone() {
        if t.role == TensorRole::Weight {
            for v in &mut params.values[t.range()] {
                *v = dist.sample(&mut rng);
            }
        }
    }
    Ok(params)
}

/// Head outputs for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub soc: f64,
    pub up: f64,
}

#[derive(Debug, Clone)]
enum Trace {
    Mlp(mlp::MlpTrace),
    Rnn(rnn::RnnTrace),
    Lstm(lstm::LstmTrace),
}

/// Intermediates saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    arch: Arch,
    param_len: usize,
    generation: u64,
    trace: Trace,
}

impl ForwardCache {
    /// LSTM cell states `c[layer][t]`, if this cache came from an LSTM.
    pub fn lstm_cell_states(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        match &self.trace {
            Trace::Lstm(t) => Some(t.cell_states()),
            _ => None,
        }
    }
}

/// Runs one window (row-major `window_len x input_dim`) through the network.
pub fn forward(params: &NetworkParams, window: &[f64]) -> Result<(Prediction, ForwardCache)> {
    let config = &params.config;
    if window.len() != config.window_size() {
        return domain(format!(
            "input window has {} values, expected {} x {}",
            window.len(),
            config.window_len,
            config.input_dim
        ));
    }
    let (out, trace) = match config.arch {
        Arch::Mlp => {
            let (o, t) = mlp::forward(params, window);
            (o, Trace::Mlp(t))
        }
        Arch::Rnn => {
            let (o, t) = rnn::forward(params, window);
            (o, Trace::Rnn(t))
        }
        Arch::Lstm => {
            let (o, t) = lstm::forward(params, window);
            (o, Trace::Lstm(t))
        }
    };
    Ok((
        Prediction { soc: out[0], up: out[1] },
        ForwardCache {
            arch: config.arch,
            param_len: params.len(),
            generation: params.generation,
            trace,
        },
    ))
}

/// Gradient of `output_grads[0] * soc + output_grads[1] * up` with respect
/// to every parameter.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, output_grads: [f64; 2]) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    backward_into(params, cache, output_grads, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into an existing buffer.
pub fn backward_into(
    params: &NetworkParams,
    cache: &ForwardCache,
    output_grads: [f64; 2],
    grads: &mut Gradients,
) -> Result<()> {
    if cache.arch != params.config.arch || cache.param_len != params.len() {
        return domain("forward cache does not match these parameters");
    }
    if cache.generation != params.generation {
        return domain("forward cache is stale: parameters changed since the forward pass");
    }
    if grads.values.len() != params.len() {
        return domain("gradient buffer has the wrong length");
    }
    match &cache.trace {
        Trace::Mlp(t) => mlp::backward(params, t, output_grads, grads),
        Trace::Rnn(t) => rnn::backward(params, t, output_grads, grads),
        Trace::Lstm(t) => lstm::backward(params, t, output_grads, grads),
    }
    Ok(())
}

// Shared dense kernels. Matrices are row-major `rows x cols`.

/// `out = bias + W x`
pub(crate) fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.clear();
    out.extend(bias.iter().enumerate().map(|(r, b)| {
        let row = &w[r * cols..(r + 1) * cols];
        b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// `out += W x`
pub(crate) fn add_matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T d`
pub(crate) fn add_matvec_t(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, dr) in d.iter().enumerate() {
        if *dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * dr;
        }
    }
}

/// `dW += d x^T`
pub(crate) fn add_outer(d: &[f64], x: &[f64], dw: &mut [f64]) {
    let cols = x.len();
    for (r, dr) in d.iter().enumerate() {
        if *dr == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x) {
            *g += dr * xv;
        }
    }
}

pub(crate) fn add_into(src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(arch: Arch) -> NetworkConfig {
        let hidden = match arch {
            Arch::Mlp => vec![3],
            Arch::Rnn => vec![8],
            Arch::Lstm => vec![4],
        };
        NetworkConfig::new(arch, hidden)
    }

    fn window(seed: u64, config: &NetworkConfig) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..config.window_size()).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// Central differences of `g0 * soc + g1 * up`.
    fn finite_difference(params: &NetworkParams, x: &[f64], g: [f64; 2], eps: f64) -> Vec<f64> {
        let mut p = params.clone();
        (0..params.len())
            .map(|k| {
                let orig = p.values()[k];
                p.values_mut()[k] = orig + eps;
                let (hi, _) = forward(&p, x).unwrap();
                p.values_mut()[k] = orig - eps;
                let (lo, _) = forward(&p, x).unwrap();
                p.values_mut()[k] = orig;
                (g[0] * (hi.soc - lo.soc) + g[1] * (hi.up - lo.up)) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
        for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale).max(1e-12);
            assert!(rel <= tol, "param {k}: analytic {a} numeric {n} rel {rel}");
        }
    }

    #[test]
    fn parameter_counts_fit_gradient_check_budget() {
        for arch in Arch::ALL {
            let layout = Layout::for_config(&small(arch)).unwrap();
            assert!(layout.param_count() <= 200, "{arch}: {}", layout.param_count());
        }
        let mlp = Layout::for_config(&NetworkConfig::default()).unwrap();
        assert_eq!(mlp.param_count(), 60 * 32 + 32 + 32 * 2 + 2);
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::new(Arch::Rnn, vec![]).validate().is_err());
        assert!(NetworkConfig::new(Arch::Mlp, vec![]).validate().is_ok());
        assert!(NetworkConfig::new(Arch::Lstm, vec![0]).validate().is_err());
        let mut c = NetworkConfig::default();
        c.output_dim = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        for arch in Arch::ALL {
            let c = NetworkConfig::new(arch, vec![16, 8]);
            let a = init_params(&c, 17, 0.01).unwrap();
            let b = init_params(&c, 17, 0.01).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, init_params(&c, 18, 0.01).unwrap());
            for t in a.layout().tensors() {
                let v = &a.values()[t.range()];
                match t.role {
                    TensorRole::Bias => assert!(v.iter().all(|&x| x == 0.0)),
                    TensorRole::Weight => assert!(v.iter().all(|&x| (-0.01..=0.01).contains(&x))),
                }
            }
        }
        assert!(init_params(&NetworkConfig::default(), 1, 0.0).is_err());
        assert!(init_params(&NetworkConfig::default(), 1, -1.0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        for arch in Arch::ALL {
            let c = small(arch);
            let p = NetworkParams::zeros(&c).unwrap();
            let (out, _) = forward(&p, &vec![0.0; c.window_size()]).unwrap();
            assert_eq!((out.soc, out.up), (0.0, 0.0));
        }
    }

    #[test]
    fn single_affine_mlp() {
        let c = NetworkConfig::new(Arch::Mlp, vec![]);
        let mut p = NetworkParams::zeros(&c).unwrap();
        p.tensor_mut("dense0.b").unwrap().copy_from_slice(&[0.25, -0.5]);
        let x = window(3, &c);
        let (out, cache) = forward(&p, &x).unwrap();
        assert_eq!((out.soc, out.up), (0.25, -0.5));

        // d soc / d W[0][k] = x[k]
        let g = backward(&p, &cache, [1.0, 0.0]).unwrap();
        let w = p.layout().find("dense0.w").unwrap();
        assert_eq!(&g.values[w.offset..w.offset + x.len()], x.as_slice());
        assert!(g.values[w.offset + x.len()..w.offset + 2 * x.len()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_zero_weights_keep_cell_at_zero() {
        let c = NetworkConfig::new(Arch::Lstm, vec![5]);
        let p = NetworkParams::zeros(&c).unwrap();
        let (_, cache) = forward(&p, &window(8, &c)).unwrap();
        let cells = cache.lstm_cell_states().unwrap();
        assert!(cells.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_cell_grows_at_most_linearly() {
        let c = NetworkConfig::new(Arch::Lstm, vec![6]);
        let p = init_params(&c, 4, 2.0).unwrap();
        let x: Vec<f64> = window(2, &c).iter().map(|v| v * 10.0).collect();
        let (_, cache) = forward(&p, &x).unwrap();
        for layer in cache.lstm_cell_states().unwrap() {
            for (t, c) in layer.iter().enumerate() {
                assert!(c.iter().all(|v| v.abs() <= (t + 1) as f64));
            }
        }
    }

    #[test]
    fn wrong_shapes_and_stale_caches_error() {
        let c = small(Arch::Rnn);
        let mut p = init_params(&c, 1, 0.1).unwrap();
        assert!(forward(&p, &[0.0; 5]).is_err());
        let (_, cache) = forward(&p, &window(1, &c)).unwrap();
        p.values_mut()[0] += 1.0;
        assert!(backward(&p, &cache, [1.0, 1.0]).is_err());

        let other = init_params(&small(Arch::Lstm), 1, 0.1).unwrap();
        let (_, cache) = forward(&other, &window(1, &small(Arch::Lstm))).unwrap();
        assert!(backward(&p, &cache, [1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_output_grads_give_zero_gradients() {
        for arch in Arch::ALL {
            let c = small(arch);
            let p = init_params(&c, 9, 0.3).unwrap();
            let (_, cache) = forward(&p, &window(9, &c)).unwrap();
            let g = backward(&p, &cache, [0.0, 0.0]).unwrap();
            assert!(g.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for arch in Arch::ALL {
            for seed in 0..5u64 {
                let c = small(arch);
                let p = init_params(&c, seed, 0.5).unwrap();
                let x = window(100 + seed, &c);
                let g = [0.7, -1.3];
                let (_, cache) = forward(&p, &x).unwrap();
                let analytic = backward(&p, &cache, g).unwrap();
                let numeric = finite_difference(&p, &x, g, 1e-6);
                assert_grads_close(&analytic.values, &numeric, 1e-5);
            }
        }
    }

    #[test]
    fn stacked_layers_gradients() {
        for arch in Arch::ALL {
            let c = NetworkConfig {
                window_len: 6,
                ..NetworkConfig::new(arch, vec![4, 3])
            };
            let p = init_params(&c, 21, 0.6).unwrap();
            let x = window(5, &c);
            let (_, cache) = forward(&p, &x).unwrap();
            let analytic = backward(&p, &cache, [1.0, 0.5]).unwrap();
            let numeric = finite_difference(&p, &x, [1.0, 0.5], 1e-6);
            assert_grads_close(&analytic.values, &numeric, 1e-5);
        }
    }
}
