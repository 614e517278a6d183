//! Forward passes. Every function takes the network's parameters as graph
//! variables in [`param_specs`](super::params::param_specs) order, so the
//! same code serves training (f32) and gradient checks (f64).

use fsegan_autodiff::{Graph, Padding, Scalar, Tensor, Var};

use super::config::{FseganConfig, ModelConfig, SeganConfig, FSEGAN_DISC_LAYERS};
use super::params::{param_specs, ModelParams, Role};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

struct Cursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl<'a> Cursor<'a> {
    fn new(vars: &'a [Var], expected: usize) -> Result<Self> {
        if vars.len() != expected {
            return Err(Error::Dimension(format!("{} parameter tensors bound, network needs {expected}", vars.len())));
        }
        Ok(Self { vars, next: 0 })
    }

    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }
}

fn expect_shape(what: &str, got: &[usize], want: &[Option<usize>]) -> Result<()> {
    let ok = got.len() == want.len() && got.iter().zip(want).all(|(g, w)| w.is_none_or(|w| *g == w));
    if !ok {
        let want: Vec<String> = want.iter().map(|w| w.map_or("*".into(), |v| v.to_string())).collect();
        return Err(Error::Dimension(format!("{what}: shape {got:?}, expected [{}]", want.join(", "))));
    }
    Ok(())
}

/// Encoder half of the spectral U-Net: one activation per stride-2 layer,
/// the last being the bottleneck. `params` holds the encoder tensors only.
pub fn fsegan_encoder<T: Scalar>(g: &mut Graph<T>, cfg: &FseganConfig, params: &[Var], x: Var) -> Result<Vec<Var>> {
    let mut p = Cursor::new(params, 2 * cfg.depth)?;
    let s = g.shape(x).to_vec();
    expect_shape("generator input", &s, &[None, None, None, Some(cfg.input_channels)])?;
    let unit = 1usize << cfg.depth;
    if s[1] == 0 || s[2] == 0 || s[1] % unit != 0 || s[2] % unit != 0 {
        return Err(Error::Dimension(format!(
            "patch {}×{} is not a multiple of 2^{} = {unit}",
            s[1], s[2], cfg.depth
        )));
    }
    let pad = Padding::same_halving(4, 4);
    let mut acts = Vec::with_capacity(cfg.depth);
    let mut h = x;
    for _ in 0..cfg.depth {
        let (w, b) = (p.take(), p.take());
        h = g.conv2d(h, w, (2, 2), pad)?;
        h = g.add_bias(h, b)?;
        h = g.leaky_relu(h, LEAKY_SLOPE);
        acts.push(h);
    }
    Ok(acts)
}

/// U-Net over `B×frames×bins×C` normalized log-Mel patches, returning
/// `B×frames×bins×1`. Encoder: stride-2 4×4 convs with leaky ReLU. Decoder:
/// stride-2 transposed convs with ReLU, each fed the previous decoder output
/// concatenated with the mirror encoder activation; the last layer is linear.
pub fn fsegan_generator<T: Scalar>(g: &mut Graph<T>, cfg: &FseganConfig, params: &[Var], x: Var) -> Result<Var> {
    let spec_len = param_specs(&ModelConfig::Fsegan(cfg.clone()), Role::Generator).len();
    Cursor::new(params, spec_len)?;
    let d = cfg.depth;
    let skips = fsegan_encoder(g, cfg, &params[..2 * d], x)?;
    let mut p = Cursor::new(&params[2 * d..], 2 * d)?;
    let pad = Padding::same_halving(4, 4);
    let mut h = skips[d - 1];
    for j in 0..d {
        let (w, b) = (p.take(), p.take());
        if j > 0 {
            h = g.concat_channels(h, skips[d - 1 - j])?;
        }
        h = g.conv2d_transpose(h, w, (2, 2), pad)?;
        h = g.add_bias(h, b)?;
        if j + 1 < d {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Patch discriminator: `(x, cand)` stacked on channels, four stride-2 4×4
/// convs (batch norm after the first), then a `1 × bins/16` convolution over
/// frequency with a sigmoid: `B × frames/16` decisions in (0, 1).
pub fn fsegan_discriminator<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &FseganConfig,
    params: &[Var],
    x: Var,
    cand: Var,
) -> Result<Var> {
    let spec_len = param_specs(&ModelConfig::Fsegan(cfg.clone()), Role::Discriminator).len();
    let mut p = Cursor::new(params, spec_len)?;
    let xs = g.shape(x).to_vec();
    expect_shape("discriminator input", &xs, &[None, None, Some(cfg.patch_bins), Some(cfg.input_channels)])?;
    expect_shape("discriminator candidate", g.shape(cand), &[Some(xs[0]), Some(xs[1]), Some(xs[2]), Some(1)])?;
    if xs[1] == 0 || xs[1] % (1 << FSEGAN_DISC_LAYERS) != 0 {
        return Err(Error::Dimension(format!("{} frames is not a multiple of 16", xs[1])));
    }
    let pad = Padding::same_halving(4, 4);
    let mut h = g.concat_channels(x, cand)?;
    for i in 0..FSEGAN_DISC_LAYERS {
        let w = p.take();
        h = g.conv2d(h, w, (2, 2), pad)?;
        h = if i == 0 {
            let b = p.take();
            g.add_bias(h, b)?
        } else {
            let (gamma, beta) = (p.take(), p.take());
            g.batch_norm(h, gamma, beta)?
        };
        h = g.leaky_relu(h, LEAKY_SLOPE);
    }
    let (w, b) = (p.take(), p.take());
    h = g.conv2d(h, w, (1, 1), Padding::ZERO)?;
    h = g.add_bias(h, b)?;
    h = g.sigmoid(h);
    let n = xs[0];
    let t = xs[1] >> FSEGAN_DISC_LAYERS;
    Ok(g.reshape(h, &[n, t])?)
}

/// Encoder half of the waveform U-Net; the last activation is the bottleneck.
pub fn segan_encoder<T: Scalar>(g: &mut Graph<T>, cfg: &SeganConfig, params: &[Var], x: Var) -> Result<Vec<Var>> {
    let depth = cfg.depth();
    let mut p = Cursor::new(params, 2 * depth)?;
    let s = g.shape(x).to_vec();
    expect_shape("generator input", &s, &[None, None, Some(cfg.input_channels)])?;
    let unit = 1usize << depth;
    if s[1] == 0 || s[1] % unit != 0 {
        return Err(Error::Dimension(format!("{} samples is not a multiple of 2^{depth}", s[1])));
    }
    let pad = Padding::same_halving_1d(cfg.filter_width);
    let mut acts = Vec::with_capacity(depth);
    let mut h = x;
    for _ in 0..depth {
        let (w, b) = (p.take(), p.take());
        h = g.conv1d(h, w, 2, pad)?;
        h = g.add_bias(h, b)?;
        h = g.leaky_relu(h, LEAKY_SLOPE);
        acts.push(h);
    }
    Ok(acts)
}

/// Waveform U-Net over `B×T×C`, width-`k` stride-2 1D convs, no latent code,
/// tanh output `B×T×1`.
pub fn segan_generator<T: Scalar>(g: &mut Graph<T>, cfg: &SeganConfig, params: &[Var], x: Var) -> Result<Var> {
    let spec_len = param_specs(&ModelConfig::Segan(cfg.clone()), Role::Generator).len();
    Cursor::new(params, spec_len)?;
    let d = cfg.depth();
    let skips = segan_encoder(g, cfg, &params[..2 * d], x)?;
    let mut p = Cursor::new(&params[2 * d..], 2 * d)?;
    let pad = Padding::same_halving_1d(cfg.filter_width);
    let mut h = skips[d - 1];
    for j in 0..d {
        let (w, b) = (p.take(), p.take());
        if j > 0 {
            h = g.concat_channels(h, skips[d - 1 - j])?;
        }
        h = g.conv1d_transpose(h, w, 2, pad)?;
        h = g.add_bias(h, b)?;
        h = if j + 1 < d { g.leaky_relu(h, LEAKY_SLOPE) } else { g.tanh(h) };
    }
    Ok(h)
}

/// Waveform discriminator: stride-2 1D convs (batch norm after the first), a
/// width-1 projection and a mean over time: one unbounded score per example.
pub fn segan_discriminator<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &SeganConfig,
    params: &[Var],
    x: Var,
    cand: Var,
) -> Result<Var> {
    let spec_len = param_specs(&ModelConfig::Segan(cfg.clone()), Role::Discriminator).len();
    let mut p = Cursor::new(params, spec_len)?;
    let xs = g.shape(x).to_vec();
    expect_shape("discriminator input", &xs, &[None, None, Some(cfg.input_channels)])?;
    expect_shape("discriminator candidate", g.shape(cand), &[Some(xs[0]), Some(xs[1]), Some(1)])?;
    if xs[1] == 0 || xs[1] % (1 << cfg.depth()) != 0 {
        return Err(Error::Dimension(format!("{} samples is not a multiple of 2^{}", xs[1], cfg.depth())));
    }
    let pad = Padding::same_halving_1d(cfg.filter_width);
    let mut h = g.concat_channels(x, cand)?;
    for i in 0..cfg.depth() {
        let w = p.take();
        h = g.conv1d(h, w, 2, pad)?;
        h = if i == 0 {
            let b = p.take();
            g.add_bias(h, b)?
        } else {
            let (gamma, beta) = (p.take(), p.take());
            g.batch_norm(h, gamma, beta)?
        };
        h = g.leaky_relu(h, LEAKY_SLOPE);
    }
    let (w, b) = (p.take(), p.take());
    h = g.conv1d(h, w, 1, (0, 0))?;
    h = g.add_bias(h, b)?;
    h = g.spatial_mean(h)?;
    Ok(g.reshape(h, &[xs[0]])?)
}

/// Generator forward for whichever architecture `config` names.
pub fn generator<T: Scalar>(g: &mut Graph<T>, config: &ModelConfig, params: &[Var], x: Var) -> Result<Var> {
    match config {
        ModelConfig::Fsegan(c) => fsegan_generator(g, c, params, x),
        ModelConfig::Segan(c) => segan_generator(g, c, params, x),
    }
}

pub fn discriminator<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    params: &[Var],
    x: Var,
    cand: Var,
) -> Result<Var> {
    match config {
        ModelConfig::Fsegan(c) => fsegan_discriminator(g, c, params, x, cand),
        ModelConfig::Segan(c) => segan_discriminator(g, c, params, x, cand),
    }
}

/// Whether the discriminator's outputs are probabilities (sigmoid head)
/// rather than unbounded scores.
pub fn discriminator_emits_probabilities(config: &ModelConfig) -> bool {
    matches!(config, ModelConfig::Fsegan(_))
}

/// Inference-only generator pass in f32.
pub fn run_generator(params: &ModelParams, x: Tensor<f32>) -> Result<Tensor<f32>> {
    if params.role() != Role::Generator {
        return Err(Error::DomainMismatch("checkpoint holds a discriminator, not a generator".into()));
    }
    let mut g = Graph::<f32>::new();
    let vars = params.bind(&mut g, false);
    let xv = g.constant(x);
    let y = generator(&mut g, params.config(), &vars, xv)?;
    Ok(g.value(y).clone())
}

/// Inference-only discriminator pass in f32.
pub fn run_discriminator(params: &ModelParams, x: Tensor<f32>, cand: Tensor<f32>) -> Result<Tensor<f32>> {
    if params.role() != Role::Discriminator {
        return Err(Error::DomainMismatch("checkpoint holds a generator, not a discriminator".into()));
    }
    let mut g = Graph::<f32>::new();
    let vars = params.bind(&mut g, false);
    let (xv, cv) = (g.constant(x), g.constant(cand));
    let y = discriminator(&mut g, params.config(), &vars, xv, cv)?;
    Ok(g.value(y).clone())
}
