//! Alternating discriminator/generator optimization over windowed example
//! pairs, with validation-driven early stopping.

use std::fmt;
use std::str::FromStr;

use fsegan_autodiff::{AdamConfig, AdamState, Graph, Scalar, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{frame_windows, AudioClip, LogMelSpectrogram};
use crate::error::{Error, Result};
use crate::models::{
    discriminator, discriminator_emits_probabilities, generator, init_params, run_generator, ModelConfig,
    ModelParams, Role,
};
use crate::synth::corpus::splitmix64;

pub const HISTORY_HEADER: &str = "step\td_loss\tadv_loss\tl1_loss\tval_metric";
/// Written above the column header so the proxy metric is never mistaken for
/// a recognition error rate.
pub const HISTORY_NOTE: &str =
    "# val_metric: mean L1 between enhanced and clean windows in normalized feature space (proxy metric, not a word error rate)";

/// Adversarial term of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialKind {
    Bce,
    Lsgan,
    /// Pure L1 regression; no discriminator is trained.
    None,
}

impl fmt::Display for AdversarialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversarialKind::Bce => "gan",
            AdversarialKind::Lsgan => "lsgan",
            AdversarialKind::None => "l1",
        })
    }
}

impl FromStr for AdversarialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gan" | "bce" => Ok(AdversarialKind::Bce),
            "lsgan" => Ok(AdversarialKind::Lsgan),
            "l1" | "none" => Ok(AdversarialKind::None),
            o => Err(Error::Config(format!("unknown loss {o:?} (gan|lsgan|l1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLossConfig {
    pub adversarial: AdversarialKind,
    /// λ in `adv + λ·L1`.
    pub l1_weight: f64,
}

impl Default for GanLossConfig {
    fn default() -> Self {
        Self {
            adversarial: AdversarialKind::Bce,
            l1_weight: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: GanLossConfig,
    pub batch_size: usize,
    pub max_steps: usize,
    pub d_steps_per_g: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
    pub g_lr: f64,
    pub d_lr: f64,
    /// Adam first-moment decay for both networks.
    pub beta1: f64,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            loss: GanLossConfig::default(),
            batch_size: 8,
            max_steps: 2000,
            d_steps_per_g: 1,
            eval_every: 100,
            patience: 5,
            seed: 0,
            g_lr: AdamConfig::default().lr,
            d_lr: AdamConfig::default().lr,
            beta1: AdamConfig::default().beta1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
            ("d_steps_per_g", self.d_steps_per_g),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.loss.l1_weight >= 0.0) {
            return Err(Error::Config(format!("l1 weight {} must be ≥ 0", self.loss.l1_weight)));
        }
        if !(self.g_lr > 0.0 && self.d_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Config(format!("beta1 {} outside [0, 1)", self.beta1)));
        }
        Ok(())
    }
}

/// One training or validation window: generator input, target, and how many
/// leading frames (or samples) are real rather than padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub valid: usize,
}

/// Equally shaped windows ready for batching. Shapes exclude the batch axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    input_shape: Vec<usize>,
    target_shape: Vec<usize>,
    examples: Vec<Example>,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl WindowSet {
    pub fn new(input_shape: Vec<usize>, target_shape: Vec<usize>, examples: Vec<Example>) -> Result<Self> {
        let (ni, nt): (usize, usize) = (input_shape.iter().product(), target_shape.iter().product());
        if input_shape.first() != target_shape.first() {
            return Err(Error::Dimension(format!(
                "input {input_shape:?} and target {target_shape:?} differ in extent"
            )));
        }
        for (i, e) in examples.iter().enumerate() {
            if e.input.len() != ni || e.target.len() != nt || e.valid > input_shape[0] {
                return Err(Error::Dimension(format!("window {i} does not match {input_shape:?}/{target_shape:?}")));
            }
        }
        Ok(Self {
            input_shape,
            target_shape,
            examples,
        })
    }

    /// Windows `width` frames wide from (noisy, clean) normalized feature
    /// pairs; clean spectrograms must have one channel.
    pub fn from_spectrograms(pairs: &[(LogMelSpectrogram, LogMelSpectrogram)], width: usize, overlap: f64) -> Result<Self> {
        let (first, _) = pairs.first().ok_or_else(|| Error::Empty("no feature pairs".into()))?;
        let (bins, ch) = (first.n_bins(), first.n_channels());
        let mut examples = Vec::new();
        for (i, (noisy, clean)) in pairs.iter().enumerate() {
            if noisy.n_bins() != bins || noisy.n_channels() != ch {
                return Err(Error::Dimension(format!("pair {i}: noisy features differ in bins or channels")));
            }
            if clean.n_channels() != 1 || clean.n_bins() != bins || clean.n_frames() != noisy.n_frames() {
                return Err(Error::Dimension(format!(
                    "pair {i}: clean features {}×{}×{} do not match noisy {}×{}×1",
                    clean.n_frames(),
                    clean.n_bins(),
                    clean.n_channels(),
                    noisy.n_frames(),
                    bins
                )));
            }
            let (xs, place) = frame_windows(noisy, width, overlap)?;
            let (ys, _) = frame_windows(clean, width, overlap)?;
            for ((x, y), p) in xs.iter().zip(&ys).zip(&place) {
                examples.push(Example {
                    input: to_f32(x.values()),
                    target: to_f32(y.values()),
                    valid: p.valid,
                });
            }
        }
        Self::new(vec![width, bins, ch], vec![width, bins, 1], examples)
    }

    /// Waveform windows of `width` samples from (noisy multichannel, clean)
    /// clip pairs; the clean target is the clean clip's first channel.
    pub fn from_waveforms(pairs: &[(AudioClip, AudioClip)], width: usize, overlap: f64) -> Result<Self> {
        let (first, _) = pairs.first().ok_or_else(|| Error::Empty("no waveform pairs".into()))?;
        if width == 0 || !(0.0..1.0).contains(&overlap) {
            return Err(Error::Config(format!("bad window {width} / overlap {overlap}")));
        }
        let ch = first.n_channels();
        let stride = ((width as f64 * (1.0 - overlap)).round() as usize).max(1);
        let mut examples = Vec::new();
        for (i, (noisy, clean)) in pairs.iter().enumerate() {
            if noisy.n_channels() != ch || clean.len() != noisy.len() {
                return Err(Error::Dimension(format!("pair {i}: channel count or length mismatch")));
            }
            let n = noisy.len();
            let mut starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|s| s + width <= n).collect();
            let covered = starts.last().map_or(0, |s| s + width);
            if starts.is_empty() || covered < n {
                starts.push(starts.last().map_or(0, |s| s + stride));
            }
            for s in starts {
                let valid = width.min(n - s);
                let mut input = vec![0.0f32; width * ch];
                let mut target = vec![0.0f32; width];
                for t in 0..valid {
                    for c in 0..ch {
                        input[t * ch + c] = noisy.channel(c)[s + t] as f32;
                    }
                    target[t] = clean.channel(0)[s + t] as f32;
                }
                examples.push(Example { input, target, valid });
            }
        }
        Self::new(vec![width, ch], vec![width, 1], examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn target_shape(&self) -> &[usize] {
        &self.target_shape
    }

    /// Stacks the chosen windows into `B×…` input and target tensors.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut xs = Vec::with_capacity(idx.len() * self.input_shape.iter().product::<usize>());
        let mut ys = Vec::with_capacity(idx.len() * self.target_shape.iter().product::<usize>());
        for &i in idx {
            let e = self
                .examples
                .get(i)
                .ok_or_else(|| Error::Dimension(format!("window {i} of {}", self.len())))?;
            xs.extend_from_slice(&e.input);
            ys.extend_from_slice(&e.target);
        }
        let shape = |s: &[usize]| [&[idx.len()][..], s].concat();
        Ok((
            Tensor::new(shape(&self.input_shape), xs)?,
            Tensor::new(shape(&self.target_shape), ys)?,
        ))
    }
}

/// One epoch: a shuffled permutation of `0..n` cut into full batches; the
/// short remainder is dropped.
pub fn make_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Empty("training corpus has no windows".into()));
    }
    if batch_size == 0 || batch_size > n {
        return Err(Error::Config(format!("batch size {batch_size} does not fit {n} windows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect())
}

/// Endless batch source that reshuffles at every epoch boundary.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    batch_size: usize,
    queue: std::collections::VecDeque<Vec<usize>>,
    pub epoch: usize,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("training corpus has no windows".into()));
        }
        if batch_size == 0 || batch_size > n {
            return Err(Error::Config(format!("batch size {batch_size} does not fit {n} windows")));
        }
        Ok(Self {
            n,
            batch_size,
            queue: Default::default(),
            epoch: 0,
        })
    }

    pub fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if self.queue.is_empty() {
            self.queue = make_batches(self.n, self.batch_size, rng)?.into();
            self.epoch += 1;
        }
        Ok(self.queue.pop_front().expect("refilled"))
    }
}

/// Discriminator decision threshold and whether raw scores need a sigmoid
/// before the cross-entropy.
fn decision_setup(model: &ModelConfig, kind: AdversarialKind) -> (bool, f64) {
    let probs = discriminator_emits_probabilities(model);
    match kind {
        AdversarialKind::Bce if !probs => (true, 0.0),
        _ => (false, 0.5),
    }
}

/// Builds the discriminator objective on `g`; returns `(loss, real, fake)`
/// where `real`/`fake` are the discriminator outputs.
pub fn discriminator_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &ModelConfig,
    kind: AdversarialKind,
    d_params: &[Var],
    x: Var,
    clean: Var,
    fake: Var,
) -> Result<(Var, Var, Var)> {
    let real_s = discriminator(g, model, d_params, x, clean)?;
    let fake_s = discriminator(g, model, d_params, x, fake)?;
    let (needs_sigmoid, _) = decision_setup(model, kind);
    let loss = match kind {
        AdversarialKind::Bce if needs_sigmoid => {
            let (r, f) = (g.sigmoid(real_s), g.sigmoid(fake_s));
            g.gan_bce_d(r, f)
        }
        AdversarialKind::Bce => g.gan_bce_d(real_s, fake_s),
        AdversarialKind::Lsgan => g.lsgan_d(real_s, fake_s),
        AdversarialKind::None => {
            return Err(Error::Training("discriminator loss requested in L1-only mode".into()));
        }
    };
    Ok((loss, real_s, fake_s))
}

/// Generator objective terms as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub adv: Option<Var>,
    pub l1: Var,
    pub total: Var,
    pub output: Var,
}

/// `adv + λ·L1(G(x), clean)`; the adversarial term is absent in L1-only mode
/// and `d_params` is then ignored.
pub fn generator_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &ModelConfig,
    loss: &GanLossConfig,
    g_params: &[Var],
    d_params: &[Var],
    x: Var,
    clean: Var,
) -> Result<GeneratorLoss> {
    let output = generator(g, model, g_params, x)?;
    let l1 = g.l1_loss(output, clean)?;
    let weighted = g.scale(l1, loss.l1_weight);
    let adv = match loss.adversarial {
        AdversarialKind::None => None,
        kind => {
            let s = discriminator(g, model, d_params, x, output)?;
            let (needs_sigmoid, _) = decision_setup(model, kind);
            Some(match kind {
                AdversarialKind::Lsgan => g.lsgan_g(s),
                _ if needs_sigmoid => {
                    let p = g.sigmoid(s);
                    g.gan_bce_g(p)
                }
                _ => g.gan_bce_g(s),
            })
        }
    };
    let total = match adv {
        Some(a) => g.add(a, weighted)?,
        None => weighted,
    };
    Ok(GeneratorLoss { adv, l1, total, output })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DStepStats {
    pub loss: f64,
    /// Fraction of real decisions above and fake decisions below threshold.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GStepStats {
    /// Zero in L1-only mode.
    pub adv: f64,
    pub l1: f64,
    pub total: f64,
}

/// Early stopping on a metric where lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    pub evals_since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            evals_since_best: 0,
        }
    }

    /// Records an evaluation; returns whether this one is a new best.
    pub fn observe(&mut self, step: usize, metric: f64) -> bool {
        match self.best {
            Some((_, b)) if metric >= b => {
                self.evals_since_best += 1;
                false
            }
            _ => {
                self.best = Some((step, metric));
                self.evals_since_best = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.evals_since_best >= self.patience
    }
}

/// Everything the training loop mutates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub step: usize,
    pub g: ModelParams,
    g_opt: AdamState<f32>,
    pub d: Option<ModelParams>,
    d_opt: Option<AdamState<f32>>,
    pub rng: ChaCha8Rng,
}

fn grads_of(g: &Graph<f32>, vars: &[Var]) -> Vec<Vec<f32>> {
    vars.iter()
        .map(|v| g.grad(*v).map(Tensor::into_data).unwrap_or_else(|| vec![0.0; g.value(*v).len()]))
        .collect()
}

fn adam_update(params: &mut ModelParams, opt: &mut AdamState<f32>, grads: &[Vec<f32>]) -> Result<()> {
    let mut slices: Vec<&mut [f32]> = params.tensors_mut().iter_mut().map(Tensor::data_mut).collect();
    let grads: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
    opt.step(&mut slices, &grads)?;
    Ok(())
}

impl TrainState {
    /// Fresh parameters and optimizer moments, all derived from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let g = init_params(&config.model, Role::Generator, splitmix64(seed ^ 0x6e6e))?;
        let g_opt = AdamState::new(
            AdamConfig {
                lr: config.g_lr,
                beta1: config.beta1,
                ..AdamConfig::default()
            },
            g.sizes(),
        );
        let (d, d_opt) = if config.loss.adversarial == AdversarialKind::None {
            (None, None)
        } else {
            let d = init_params(&config.model, Role::Discriminator, splitmix64(seed ^ 0xd15c))?;
            let opt = AdamState::new(
                AdamConfig {
                    lr: config.d_lr,
                    beta1: config.beta1,
                    ..AdamConfig::default()
                },
                d.sizes(),
            );
            (Some(d), Some(opt))
        };
        let rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xba7c));
        Ok(Self {
            config,
            step: 0,
            g,
            g_opt,
            d,
            d_opt,
            rng,
        })
    }

    /// One optimizer step on the discriminator with the generator frozen.
    pub fn d_step(&mut self, x: &Tensor<f32>, clean: &Tensor<f32>) -> Result<DStepStats> {
        let kind = self.config.loss.adversarial;
        let (Some(d), Some(opt)) = (self.d.as_mut(), self.d_opt.as_mut()) else {
            return Err(Error::Training("d_step called in L1-only mode".into()));
        };
        let model = &self.config.model;
        let mut g = Graph::<f32>::new();
        let gv = self.g.bind(&mut g, false);
        let dv = d.bind(&mut g, true);
        let (xv, yv) = (g.constant(x.clone()), g.constant(clean.clone()));
        let fake = generator(&mut g, model, &gv, xv)?;
        let (loss, real_s, fake_s) = discriminator_loss(&mut g, model, kind, &dv, xv, yv, fake)?;
        let value = g.value(loss).item() as f64;
        let (_, threshold) = decision_setup(model, kind);
        let threshold = threshold as f32;
        let (r, f) = (g.value(real_s).data(), g.value(fake_s).data());
        let correct = r.iter().filter(|v| **v > threshold).count() + f.iter().filter(|v| **v < threshold).count();
        let accuracy = correct as f64 / (r.len() + f.len()) as f64;
        if value.is_finite() {
            g.backward(loss)?;
            adam_update(d, opt, &grads_of(&g, &dv))?;
        }
        Ok(DStepStats { loss: value, accuracy })
    }

    /// One optimizer step on the generator with the discriminator frozen.
    pub fn g_step(&mut self, x: &Tensor<f32>, clean: &Tensor<f32>) -> Result<GStepStats> {
        let model = &self.config.model;
        let mut g = Graph::<f32>::new();
        let gv = self.g.bind(&mut g, true);
        let dv = match &self.d {
            Some(d) if self.config.loss.adversarial != AdversarialKind::None => d.bind(&mut g, false),
            _ => Vec::new(),
        };
        let (xv, yv) = (g.constant(x.clone()), g.constant(clean.clone()));
        let terms = generator_loss(&mut g, model, &self.config.loss, &gv, &dv, xv, yv)?;
        let stats = GStepStats {
            adv: terms.adv.map_or(0.0, |a| g.value(a).item() as f64),
            l1: g.value(terms.l1).item() as f64,
            total: g.value(terms.total).item() as f64,
        };
        if stats.total.is_finite() {
            g.backward(terms.total)?;
            adam_update(&mut self.g, &mut self.g_opt, &grads_of(&g, &gv))?;
        }
        Ok(stats)
    }
}

/// Mean |G(x) − clean| over the valid (unpadded) part of every window.
pub fn validate(g: &ModelParams, val: &WindowSet) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Empty("validation set has no windows".into()));
    }
    let row: usize = val.target_shape()[1..].iter().product();
    let (mut sum, mut count) = (0.0f64, 0usize);
    let idx: Vec<usize> = (0..val.len()).collect();
    for chunk in idx.chunks(16) {
        let (x, y) = val.batch(chunk)?;
        let out = run_generator(g, x)?;
        let per = out.len() / chunk.len();
        for (k, &i) in chunk.iter().enumerate() {
            let n = val.examples()[i].valid * row;
            let (o, t) = (&out.data()[k * per..k * per + n], &y.data()[k * per..k * per + n]);
            sum += o.iter().zip(t).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>();
            count += n;
        }
    }
    if count == 0 {
        return Err(Error::Empty("validation windows hold no valid frames".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub d_loss: Option<f64>,
    pub adv_loss: f64,
    pub l1_loss: f64,
    pub val_metric: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

impl HistoryRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            self.step,
            cell(self.d_loss),
            self.adv_loss,
            self.l1_loss,
            cell(self.val_metric)
        )
    }
}

pub fn history_text(rows: &[HistoryRow]) -> String {
    let mut s = format!("{HISTORY_NOTE}\n{HISTORY_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Generator with the lowest validation metric.
    pub best_g: ModelParams,
    pub best_step: usize,
    pub best_metric: f64,
    /// State after the last step (final G, D and optimizer moments).
    pub state: TrainState,
    pub history: Vec<HistoryRow>,
    /// Discriminator batch accuracy of every step's first D update.
    pub d_accuracy: Vec<f64>,
    pub stopped_early: bool,
}

/// Runs `d_steps_per_g` discriminator updates and one generator update per
/// step, evaluating every `eval_every` steps and at the end. `on_row` sees
/// each history row as it is produced.
pub fn train(
    config: &TrainConfig,
    train_set: &WindowSet,
    val_set: &WindowSet,
    on_row: &mut dyn FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    let (want_in, want_out) = config.model.example_shapes();
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if set.input_shape() != want_in || set.target_shape() != want_out {
            return Err(Error::Dimension(format!(
                "{name} windows are {:?}→{:?}, model expects {want_in:?}→{want_out:?}",
                set.input_shape(),
                set.target_shape()
            )));
        }
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set has no windows".into()));
    }
    let mut state = TrainState::new(config.clone())?;
    let mut stream = BatchStream::new(train_set.len(), config.batch_size)?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_g = state.g.clone();
    let adversarial = config.loss.adversarial != AdversarialKind::None;
    let mut history = Vec::new();
    let mut d_accuracy = Vec::new();
    let mut stopped_early = false;
    let mut batch_no = 0usize;

    while state.step < config.max_steps {
        let step = state.step + 1;
        let idx = stream.next_batch(&mut state.rng)?;
        let (x, y) = train_set.batch(&idx)?;
        let mut d_loss = None;
        if adversarial {
            for k in 0..config.d_steps_per_g {
                let (dx, dy, didx) = if k == 0 {
                    (x.clone(), y.clone(), idx.clone())
                } else {
                    let i = stream.next_batch(&mut state.rng)?;
                    let (a, b) = train_set.batch(&i)?;
                    batch_no += 1;
                    (a, b, i)
                };
                let g_before = cfg!(debug_assertions).then(|| state.g.clone());
                let s = state.d_step(&dx, &dy)?;
                if let Some(before) = g_before {
                    assert_eq!(before, state.g, "d_step modified the generator");
                }
                if !s.loss.is_finite() {
                    return Err(non_finite("discriminator", s.loss, step, batch_no, &didx));
                }
                if k == 0 {
                    d_accuracy.push(s.accuracy);
                    d_loss = Some(s.loss);
                }
            }
        }
        let d_before = cfg!(debug_assertions).then(|| state.d.clone());
        let gs = state.g_step(&x, &y)?;
        if let Some(before) = d_before {
            assert_eq!(before, state.d, "g_step modified the discriminator");
        }
        if !gs.total.is_finite() {
            return Err(non_finite("generator", gs.total, step, batch_no, &idx));
        }
        batch_no += 1;
        state.step = step;

        let mut val_metric = None;
        if step % config.eval_every == 0 || step == config.max_steps {
            let m = validate(&state.g, val_set)?;
            if !m.is_finite() {
                return Err(Error::Training(format!("validation metric {m} at step {step}")));
            }
            if stopper.observe(step, m) {
                best_g = state.g.clone();
            }
            val_metric = Some(m);
        }
        let row = HistoryRow {
            step,
            d_loss,
            adv_loss: gs.adv,
            l1_loss: gs.l1,
            val_metric,
        };
        on_row(&row);
        history.push(row);
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let (best_step, best_metric) = stopper.best.expect("at least one evaluation runs");
    Ok(TrainOutcome {
        best_g,
        best_step,
        best_metric,
        state,
        history,
        d_accuracy,
        stopped_early,
    })
}

fn non_finite(which: &str, value: f64, step: usize, batch_index: usize, idx: &[usize]) -> Error {
    Error::NonFiniteLoss {
        step: step as u64,
        batch_index,
        detail: format!("{which} loss is {value}; batch holds windows {idx:?}"),
    }
}
