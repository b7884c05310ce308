//! Layers and model assembly.
//!
//! Four layer kinds cover every experiment:
//!
//! * [`LinearLayer`] — the affine map `L(X; W, B) = XW + B`.
//! * [`BundleLayer`] — the generated-weight layer. A sigmoid gate `G`
//!   splits the input; the gated part feeds a latent encoder whose output
//!   *generates, per sample*, the weight matrix (tanh-bounded, reshaped
//!   `n x m`) and bias of the linear map applied to the complementary
//!   `(1-G)`-gated input. The flattened generated weights (the
//!   "interpretors") are exposed for analysis.
//! * [`Bioclock`] — an input-conditioned periodic time encoding: a scalar
//!   bundle head `ψ` sets a sigmoid-bounded period `T ∈ [T_min, T_max]`
//!   per sample, and the output is `(A·sin(2πt/T), A·cos(2πt/T))` with a
//!   learned amplitude `A`, appended to the observation.
//! * [`LayerNormLayer`] — row-wise layer normalisation with gain/bias.
//!
//! A [`Model`] is a sequential stack described by a [`ModelConfig`] plus an
//! optional bioclock. Forward passes record onto a caller-supplied
//! [`Tape`] and return the parameter `Var`s in canonical order, so
//! optimizers can collect gradients positionally. Parameter layout, init
//! draw order and checkpoint paths are all fixed, which keeps runs
//! reproducible and checkpoints portable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::householder_qr;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Default layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Weight/bias initialisation schemes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `U(-k, k)` with `k = 1/sqrt(fan_in)` for both weight and bias (the
    /// default-linear convention).
    FanInUniform,
    /// Orthogonal weight scaled by `gain`; bias zero.
    Orthogonal { gain: f64 },
    /// Standard-normal entries (used for otherwise-unspecified scalars).
    StandardNormal,
    /// All zeros.
    Zeros,
}

/// Samples an orthogonal `rows x cols` matrix scaled by `gain`: QR of a
/// square standard-normal matrix of side `max(rows, cols)`, truncated to
/// shape. Preserves orthonormal columns (tall) or rows (wide).
fn orthogonal_matrix(
    rows: usize,
    cols: usize,
    gain: f64,
    stream: &mut RngStream,
) -> Result<Tensor> {
    let side = rows.max(cols);
    let mut last_err = None;
    // A standard-normal matrix is almost surely full rank; retry a few
    // times anyway rather than failing an entire run on a freak draw.
    for _ in 0..4 {
        let sample = Tensor::rand_normal(&[side, side], stream)?;
        match householder_qr(&sample) {
            Ok((q, _)) => {
                let mut data = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        data.push(gain * q.at2(i, j));
                    }
                }
                return Tensor::new(vec![rows, cols], data);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

/// Affine layer `XW + B` with `W: [n_in x n_out]`, `B: [n_out]`.
#[derive(Clone, Debug)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    /// Initialises a layer, drawing weight then bias from `stream`.
    pub fn init(n_in: usize, n_out: usize, init: Init, stream: &mut RngStream) -> Result<Self> {
        let (weight, bias) = match init {
            Init::FanInUniform => {
                let k = 1.0 / (n_in as f64).sqrt();
                (
                    Tensor::rand_uniform(&[n_in, n_out], -k, k, stream)?,
                    Tensor::rand_uniform(&[n_out], -k, k, stream)?,
                )
            }
            Init::Orthogonal { gain } => (
                orthogonal_matrix(n_in, n_out, gain, stream)?,
                Tensor::zeros(&[n_out])?,
            ),
            Init::StandardNormal => (
                Tensor::rand_normal(&[n_in, n_out], stream)?,
                Tensor::rand_normal(&[n_out], stream)?,
            ),
            Init::Zeros => (Tensor::zeros(&[n_in, n_out])?, Tensor::zeros(&[n_out])?),
        };
        Ok(LinearLayer { weight, bias })
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Records `x·W + B`, pushing the parameter leaves onto `vars`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        vars: &mut Vec<Var>,
        trainable: bool,
    ) -> Result<Var> {
        let w = tape.leaf(self.weight.clone(), trainable);
        let b = tape.leaf(self.bias.clone(), trainable);
        vars.push(w);
        vars.push(b);
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    fn names(prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}weight"));
        out.push(format!("{prefix}bias"));
    }

    fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Intermediate values of a bundle layer's forward pass.
pub struct BundleTrace {
    /// Gate activations `G ∈ (0,1)`, shape `[batch x n]`.
    pub gate: Var,
    /// Latent code `X_l`, shape `[batch x d]`.
    pub latent: Var,
    /// Flattened generated weights (post-tanh), shape `[batch x n·m]` —
    /// the per-sample interpretors.
    pub weights_flat: Var,
}

/// The generated-weight bundle layer.
#[derive(Clone, Debug)]
pub struct BundleLayer {
    pub gate: LinearLayer,       // n -> n
    pub latent: LinearLayer,     // n -> d
    pub weight_gen: LinearLayer, // d -> n·m
    pub bias_gen: LinearLayer,   // d -> m
    n: usize,
    d: usize,
    m: usize,
}

impl BundleLayer {
    /// Initialises all four internal affines in a fixed order
    /// (gate, latent, weight generator, bias generator).
    pub fn init(n: usize, d: usize, m: usize, init: Init, stream: &mut RngStream) -> Result<Self> {
        Ok(BundleLayer {
            gate: LinearLayer::init(n, n, init, stream)?,
            latent: LinearLayer::init(n, d, init, stream)?,
            weight_gen: LinearLayer::init(d, n * m, init, stream)?,
            bias_gen: LinearLayer::init(d, m, init, stream)?,
            n,
            d,
            m,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.d, self.m)
    }

    /// Trainable scalar count: `n² + n + nd + d + d·n·m + n·m + d·m + m`.
    pub fn parameter_count(n: usize, d: usize, m: usize) -> usize {
        n * n + n + n * d + d + d * n * m + n * m + d * m + m
    }

    /// Records the full forward pass:
    /// `G = σ(L(X)); X_l = L(G*X); W = tanh(L(X_l)); B = L(X_l);
    ///  Y = ((1-G)*X)·R(W) + B` with `R` the per-sample `n x m` reshape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        vars: &mut Vec<Var>,
        trainable: bool,
    ) -> Result<(Var, BundleTrace)> {
        let (batch, n_in) = tape.value(x).dims2("bundle_forward")?;
        if n_in != self.n {
            return Err(Error::ShapeMismatch {
                op: "bundle_forward",
                left: vec![batch, n_in],
                right: vec![self.n],
            });
        }
        let gate_pre = self.gate.forward(tape, x, vars, trainable)?;
        let gate = tape.sigmoid(gate_pre)?;
        let gated = tape.mul(gate, x)?;
        let latent = self.latent.forward(tape, gated, vars, trainable)?;
        let weights_pre = self.weight_gen.forward(tape, latent, vars, trainable)?;
        let weights_flat = tape.tanh(weights_pre)?;
        let bias = self.bias_gen.forward(tape, latent, vars, trainable)?;

        let weights = tape.reshape(weights_flat, &[batch, self.n, self.m])?;
        let ones = tape.constant(Tensor::ones(&[batch, self.n])?);
        let complement = tape.sub(ones, gate)?;
        let residual = tape.mul(complement, x)?;
        let projected = tape.batched_matmul(residual, weights)?;
        let y = tape.add(projected, bias)?;
        Ok((
            y,
            BundleTrace {
                gate,
                latent,
                weights_flat,
            },
        ))
    }

    fn names(prefix: &str, out: &mut Vec<String>) {
        LinearLayer::names(&format!("{prefix}gate."), out);
        LinearLayer::names(&format!("{prefix}latent."), out);
        LinearLayer::names(&format!("{prefix}weight_gen."), out);
        LinearLayer::names(&format!("{prefix}bias_gen."), out);
    }

    fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.gate.tensors(out);
        self.latent.tensors(out);
        self.weight_gen.tensors(out);
        self.bias_gen.tensors(out);
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.gate.tensors_mut(out);
        self.latent.tensors_mut(out);
        self.weight_gen.tensors_mut(out);
        self.bias_gen.tensors_mut(out);
    }
}

/// Row-wise layer normalisation with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNormLayer {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNormLayer {
    /// Standard init: gain 1, bias 0 (no random draws).
    pub fn init(h: usize) -> Result<Self> {
        if h < 2 {
            return Err(Error::InvalidConfig {
                detail: format!("layer norm needs width >= 2, got {h}"),
            });
        }
        Ok(LayerNormLayer {
            gain: Tensor::ones(&[h])?,
            bias: Tensor::zeros(&[h])?,
            eps: LAYER_NORM_EPS,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        vars: &mut Vec<Var>,
        trainable: bool,
    ) -> Result<Var> {
        let core = tape.layer_norm(x, self.eps)?;
        let gain = tape.leaf(self.gain.clone(), trainable);
        let bias = tape.leaf(self.bias.clone(), trainable);
        vars.push(gain);
        vars.push(bias);
        let scaled = tape.mul(core, gain)?;
        tape.add(scaled, bias)
    }

    fn names(prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}gain"));
        out.push(format!("{prefix}bias"));
    }

    fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.push(&self.gain);
        out.push(&self.bias);
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.gain);
        out.push(&mut self.bias);
    }
}

/// Input-conditioned periodic time encoding.
#[derive(Clone, Debug)]
pub struct Bioclock {
    /// Scalar-output bundle head that sets the period.
    pub psi: BundleLayer,
    /// Learned amplitude `A`, shape `[1]`.
    pub amplitude: Tensor,
    pub t_min: f64,
    pub t_max: f64,
}

impl Bioclock {
    /// `ψ` is a bundle layer `obs_dim -> 1` (latent = obs_dim); the
    /// amplitude is always drawn standard-normal.
    pub fn init(
        obs_dim: usize,
        t_min: f64,
        t_max: f64,
        init: Init,
        stream: &mut RngStream,
    ) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(Error::InvalidConfig {
                detail: format!("bioclock needs 0 < t_min < t_max, got [{t_min}, {t_max}]"),
            });
        }
        let psi = BundleLayer::init(obs_dim, obs_dim, 1, init, stream)?;
        let amplitude = Tensor::new(vec![1], vec![stream.standard_normal()])?;
        Ok(Bioclock {
            psi,
            amplitude,
            t_min,
            t_max,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.psi.dims().0
    }

    /// Per-sample period `T = T_min + σ(ψ(X))·(T_max − T_min)` as plain
    /// values (analysis helper).
    pub fn periods(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let mut vars = Vec::new();
        let (psi_out, _) = self.psi.forward(&mut tape, vx, &mut vars, false)?;
        let sig = tape.value(psi_out).sigmoid()?;
        sig.scale(self.t_max - self.t_min)?
            .map("periods", |v| v + self.t_min)
    }

    /// Records `Y_t = (A·sin(2πt/T), A·cos(2πt/T))` for a column of step
    /// indices `time: [batch x 1]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        obs: Var,
        time: &Tensor,
        vars: &mut Vec<Var>,
        trainable: bool,
    ) -> Result<Var> {
        let (batch, _) = tape.value(obs).dims2("bioclock_forward")?;
        if time.shape() != [batch, 1] {
            return Err(Error::ShapeMismatch {
                op: "bioclock_forward",
                left: time.shape().to_vec(),
                right: vec![batch, 1],
            });
        }
        let (psi_out, _) = self.psi.forward(tape, obs, vars, trainable)?;
        let bounded = tape.sigmoid(psi_out)?;
        let span = tape.scale(bounded, self.t_max - self.t_min)?;
        let floor = tape.constant(Tensor::full(&[batch, 1], self.t_min)?);
        let period = tape.add(span, floor)?;
        let inv_period = tape.recip(period)?;
        let t = tape.constant(time.clone());
        let cycles = tape.mul(t, inv_period)?;
        let phase = tape.scale(cycles, 2.0 * std::f64::consts::PI)?;
        let sin = tape.sin(phase)?;
        let cos = tape.cos(phase)?;
        let amp = tape.leaf(self.amplitude.clone(), trainable);
        vars.push(amp);
        let y_sin = tape.mul(sin, amp)?;
        let y_cos = tape.mul(cos, amp)?;
        tape.concat(y_sin, y_cos, 1)
    }

    fn names(prefix: &str, out: &mut Vec<String>) {
        BundleLayer::names(&format!("{prefix}psi."), out);
        out.push(format!("{prefix}amplitude"));
    }

    fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        self.psi.tensors(out);
        out.push(&self.amplitude);
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.psi.tensors_mut(out);
        out.push(&mut self.amplitude);
    }
}

/// One layer position in a [`ModelConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { out: usize, init: Init },
    /// Bundle layer with latent dim = input dim.
    Bundle { out: usize, init: Init },
    LayerNorm,
    Tanh,
    LogSoftmax,
}

/// Bioclock configuration: `ψ` reads the first `obs_dim` input columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BioclockSpec {
    pub obs_dim: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub init: Init,
}

/// Complete architecture description.
///
/// `input_dim` is the raw input width *before* the bioclock appends its
/// two components; with a clock, the first layer therefore consumes
/// `input_dim + 2` columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bioclock: Option<BioclockSpec>,
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// Walks the layer chain, returning per-layer input widths and the
    /// final output width. Fails on inconsistent dims.
    fn layer_widths(&self) -> Result<(Vec<usize>, usize)> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig {
                detail: "input_dim must be positive".to_string(),
            });
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "a model needs at least one layer".to_string(),
            });
        }
        if let Some(clock) = &self.bioclock {
            if clock.obs_dim == 0 || clock.obs_dim > self.input_dim {
                return Err(Error::InvalidConfig {
                    detail: format!(
                        "bioclock obs_dim {} must be in 1..={}",
                        clock.obs_dim, self.input_dim
                    ),
                });
            }
        }
        let mut width = self.input_dim + if self.bioclock.is_some() { 2 } else { 0 };
        let mut widths = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            widths.push(width);
            match spec {
                LayerSpec::Linear { out, .. } | LayerSpec::Bundle { out, .. } => {
                    if *out == 0 {
                        return Err(Error::InvalidConfig {
                            detail: "layer output width must be positive".to_string(),
                        });
                    }
                    width = *out;
                }
                LayerSpec::LayerNorm => {
                    if width < 2 {
                        return Err(Error::InvalidConfig {
                            detail: "layer norm needs width >= 2".to_string(),
                        });
                    }
                }
                LayerSpec::Tanh | LayerSpec::LogSoftmax => {}
            }
        }
        Ok((widths, width))
    }

    /// Final output width of the stack.
    pub fn output_dim(&self) -> Result<usize> {
        Ok(self.layer_widths()?.1)
    }
}

/// Exact trainable-scalar count for a configuration.
pub fn count_parameters(config: &ModelConfig) -> Result<usize> {
    let (widths, _) = config.layer_widths()?;
    let mut total = 0;
    for (spec, &n_in) in config.layers.iter().zip(&widths) {
        total += match spec {
            LayerSpec::Linear { out, .. } => n_in * out + out,
            LayerSpec::Bundle { out, .. } => BundleLayer::parameter_count(n_in, n_in, *out),
            LayerSpec::LayerNorm => 2 * n_in,
            LayerSpec::Tanh | LayerSpec::LogSoftmax => 0,
        };
    }
    if let Some(clock) = &config.bioclock {
        total += BundleLayer::parameter_count(clock.obs_dim, clock.obs_dim, 1) + 1;
    }
    Ok(total)
}

/// A built layer instance.
#[derive(Clone, Debug)]
pub enum Layer {
    Linear(LinearLayer),
    Bundle(BundleLayer),
    LayerNorm(LayerNormLayer),
    Tanh,
    LogSoftmax,
}

/// Recorded forward pass of a model.
pub struct ForwardPass {
    /// Final output node.
    pub output: Var,
    /// Parameter leaves in the model's canonical parameter order.
    pub param_vars: Vec<Var>,
    /// Intermediates of the first layer when it is a bundle layer.
    pub bundle_trace: Option<BundleTrace>,
}

/// A sequential model, optionally time-aware via a bioclock.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    pub layers: Vec<Layer>,
    pub bioclock: Option<Bioclock>,
}

impl Model {
    /// Builds and initialises a model. Draw order is fixed: layers in
    /// sequence (each consuming its scheme's draws), then the bioclock.
    pub fn build(config: &ModelConfig, stream: &mut RngStream) -> Result<Model> {
        let (widths, _) = config.layer_widths()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (spec, &n_in) in config.layers.iter().zip(&widths) {
            layers.push(match *spec {
                LayerSpec::Linear { out, init } => {
                    Layer::Linear(LinearLayer::init(n_in, out, init, stream)?)
                }
                LayerSpec::Bundle { out, init } => {
                    Layer::Bundle(BundleLayer::init(n_in, n_in, out, init, stream)?)
                }
                LayerSpec::LayerNorm => Layer::LayerNorm(LayerNormLayer::init(n_in)?),
                LayerSpec::Tanh => Layer::Tanh,
                LayerSpec::LogSoftmax => Layer::LogSoftmax,
            });
        }
        let bioclock = match &config.bioclock {
            Some(spec) => Some(Bioclock::init(
                spec.obs_dim,
                spec.t_min,
                spec.t_max,
                spec.init,
                stream,
            )?),
            None => None,
        };
        Ok(Model {
            config: config.clone(),
            layers,
            bioclock,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Parameter paths in canonical order (matches [`Model::params`]).
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let prefix = format!("layers.{i}.");
            match layer {
                Layer::Linear(_) => LinearLayer::names(&prefix, &mut out),
                Layer::Bundle(_) => BundleLayer::names(&prefix, &mut out),
                Layer::LayerNorm(_) => LayerNormLayer::names(&prefix, &mut out),
                Layer::Tanh | Layer::LogSoftmax => {}
            }
        }
        if self.bioclock.is_some() {
            Bioclock::names("bioclock.", &mut out);
        }
        out
    }

    /// Parameter tensors in canonical order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => l.tensors(&mut out),
                Layer::Bundle(b) => b.tensors(&mut out),
                Layer::LayerNorm(n) => n.tensors(&mut out),
                Layer::Tanh | Layer::LogSoftmax => {}
            }
        }
        if let Some(clock) = &self.bioclock {
            clock.tensors(&mut out);
        }
        out
    }

    /// Mutable parameter tensors in canonical order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => l.tensors_mut(&mut out),
                Layer::Bundle(b) => b.tensors_mut(&mut out),
                Layer::LayerNorm(n) => n.tensors_mut(&mut out),
                Layer::Tanh | Layer::LogSoftmax => {}
            }
        }
        if let Some(clock) = &mut self.bioclock {
            clock.tensors_mut(&mut out);
        }
        out
    }

    /// Total trainable scalars (by enumeration; matches
    /// [`count_parameters`] on the same config).
    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Records a forward pass on `tape`.
    ///
    /// `input` must be `[batch x input_dim]`. Clocked models additionally
    /// need `time` (`[batch x 1]` step indices); the clock's `ψ` reads the
    /// first `obs_dim` input columns and the two clock components are
    /// appended to the input before the first layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        input: Var,
        time: Option<&Tensor>,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let (_, width) = tape.value(input).dims2("model_forward")?;
        if width != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                op: "model_forward",
                left: tape.value(input).shape().to_vec(),
                right: vec![self.config.input_dim],
            });
        }

        let mut clock_vars = Vec::new();
        let mut x = match &self.bioclock {
            Some(clock) => {
                let time = time.ok_or_else(|| Error::InvalidConfig {
                    detail: "clocked model forward requires step times".to_string(),
                })?;
                let obs = if clock.obs_dim() == width {
                    input
                } else {
                    tape.slice_cols(input, clock.obs_dim())?
                };
                let encoding = clock.forward(tape, obs, time, &mut clock_vars, trainable)?;
                tape.concat(input, encoding, 1)?
            }
            None => input,
        };

        let mut param_vars = Vec::new();
        let mut bundle_trace = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Linear(l) => l.forward(tape, x, &mut param_vars, trainable)?,
                Layer::Bundle(b) => {
                    let (y, trace) = b.forward(tape, x, &mut param_vars, trainable)?;
                    if i == 0 {
                        bundle_trace = Some(trace);
                    }
                    y
                }
                Layer::LayerNorm(n) => n.forward(tape, x, &mut param_vars, trainable)?,
                Layer::Tanh => tape.tanh(x)?,
                Layer::LogSoftmax => tape.log_softmax(x)?,
            };
        }
        param_vars.extend(clock_vars);
        Ok(ForwardPass {
            output: x,
            param_vars,
            bundle_trace,
        })
    }

    /// Plain evaluation: forward on a scratch tape, returning output
    /// values.
    pub fn predict(&self, x: &Tensor, time: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let pass = self.forward(&mut tape, input, time, false)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Per-sample flattened generated weights of the first layer
    /// (post-tanh). Errors unless the first layer is a bundle layer.
    pub fn extract_interpretors(&self, x: &Tensor, time: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let pass = self.forward(&mut tape, input, time, false)?;
        match pass.bundle_trace {
            Some(trace) => Ok(tape.value(trace.weights_flat).clone()),
            None => Err(Error::InvalidConfig {
                detail: "interpretor extraction requires the first layer to be a bundle layer"
                    .to_string(),
            }),
        }
    }

    /// Serialises all parameters to a versioned JSON checkpoint.
    pub fn save_checkpoint(&self) -> Result<String> {
        let mut params = BTreeMap::new();
        for (name, t) in self.param_names().into_iter().zip(self.params()) {
            params.insert(
                name,
                CheckpointTensor {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                },
            );
        }
        let doc = CheckpointDoc {
            format_version: CHECKPOINT_VERSION,
            params,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Restores parameters from [`Model::save_checkpoint`] output.
    /// Validates version, the exact parameter-path set and every shape.
    pub fn load_checkpoint(&mut self, json: &str) -> Result<()> {
        let mut doc: CheckpointDoc = serde_json::from_str(json)?;
        if doc.format_version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch {
                detail: format!(
                    "format version {} (expected {CHECKPOINT_VERSION})",
                    doc.format_version
                ),
            });
        }
        let names = self.param_names();
        for (name, target) in names.into_iter().zip(self.params_mut()) {
            let stored = doc
                .params
                .remove(&name)
                .ok_or_else(|| Error::CheckpointMismatch {
                    detail: format!("missing parameter `{name}`"),
                })?;
            if stored.shape != target.shape() {
                return Err(Error::CheckpointMismatch {
                    detail: format!(
                        "shape of `{name}`: checkpoint {:?} vs model {:?}",
                        stored.shape,
                        target.shape()
                    ),
                });
            }
            *target = Tensor::new(stored.shape, stored.data)?;
        }
        if let Some(extra) = doc.params.keys().next() {
            return Err(Error::CheckpointMismatch {
                detail: format!("checkpoint has unknown parameter `{extra}`"),
            });
        }
        Ok(())
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    params: BTreeMap<String, CheckpointTensor>,
}
