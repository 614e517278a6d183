//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fsegan_autodiff::gradcheck::{check_gradients, GradCheckOptions};
use fsegan_autodiff::{Graph, Padding, Tensor, Var};
use fsegan_core::dsp::*;
use fsegan_core::metrics::{enhance_features, evaluate_pair};
use fsegan_core::models::*;
use fsegan_core::pipeline::{normalize_pairs, pair_features};
use fsegan_core::synth::*;
use fsegan_core::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// ------------------------------------------------------------ criterion 1

fn zero_params(config: &ModelConfig, role: Role) -> ModelParams {
    let named = param_specs(config, role)
        .into_iter()
        .map(|s| {
            let n = s.shape.iter().product();
            (s.name, Tensor::new(s.shape, vec![0.0f32; n]).unwrap())
        })
        .collect();
    ModelParams::new(config.clone(), role, named).unwrap()
}

fn architecture() -> Outcome {
    let t = Instant::now();
    let cfg = FseganConfig::default();
    let model = ModelConfig::Fsegan(cfg.clone());
    // shapes do not depend on values; zero tensors skip ~44M normal draws
    let gp = zero_params(&model, Role::Generator);
    let dp = zero_params(&model, Role::Discriminator);
    let mut g = Graph::<f32>::new();
    let gv = gp.bind(&mut g, false);
    let dv = dp.bind(&mut g, false);
    let x = g.constant(Tensor::new(vec![1, 128, 128, 2], vec![0.0; 128 * 128 * 2]).unwrap());
    let enc = fsegan_encoder(&mut g, &cfg, &gv[..2 * cfg.depth], x).map_err(err)?;
    let y = generator(&mut g, &model, &gv, x).map_err(err)?;
    let d = discriminator(&mut g, &model, &dv, x, y).map_err(err)?;
    let decoders = param_specs(&model, Role::Generator)
        .iter()
        .filter(|s| s.name.starts_with("dec") && s.name.ends_with(".w"))
        .count();
    let (out_shape, d_shape) = (g.shape(y).to_vec(), g.shape(d).to_vec());

    let seg = SeganConfig {
        window_samples: 16384,
        ..SeganConfig::default()
    };
    let seg_model = ModelConfig::Segan(seg.clone());
    let sp = zero_params(&seg_model, Role::Generator);
    let mut g = Graph::<f32>::new();
    let sv = sp.bind(&mut g, false);
    let wx = g.constant(Tensor::new(vec![1, 16384, 2], vec![0.0; 16384 * 2]).unwrap());
    let senc = segan_encoder(&mut g, &seg, &sv[..2 * seg.depth()], wx).map_err(err)?;
    let bottleneck = g.shape(*senc.last().unwrap()).to_vec();
    let elapsed = t.elapsed().as_secs_f64();

    check(
        out_shape == [1, 128, 128, 1]
            && enc.len() == 7
            && decoders == 7
            && d_shape == [1, 8]
            && bottleneck == [1, 8, 1024]
            && elapsed < 1.0,
        format!(
            "G {out_shape:?}, {} encoder / {decoders} decoder layers, D {d_shape:?}, SEGAN bottleneck {bottleneck:?}, {elapsed:.2} s",
            enc.len()
        ),
    )
}

// ------------------------------------------------------------ criterion 2

/// `Σ w·y` for a fixed random `w`, as a full-width convolution over a
/// flattened view, so every output element carries its own gradient.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> fsegan_autodiff::Result<Var> {
    let n = g.value(y).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let flat = g.reshape(y, &[1, 1, n, 1])?;
    let wk = g.constant(Tensor::new(vec![1, n, 1, 1], w)?);
    let s = g.conv2d(flat, wk, (1, 1), Padding::ZERO)?;
    g.reshape(s, &[])
}

struct Sweep {
    cases: usize,
    worst: f64,
    worst_case: String,
}

impl Sweep {
    fn new() -> Self {
        Sweep {
            cases: 0,
            worst: 0.0,
            worst_case: String::new(),
        }
    }

    fn run<F>(&mut self, label: &str, inputs: Vec<Tensor<f64>>, opts: GradCheckOptions, f: F) -> Result<(), String>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> fsegan_autodiff::Result<Var>,
    {
        let r = check_gradients(f, &inputs, opts).map_err(|e| format!("{label}: {e}"))?;
        self.cases += 1;
        if r.max_rel_error >= self.worst {
            self.worst = r.max_rel_error;
            self.worst_case = match &r.worst {
                Some(m) => format!("{label}, tensor {} [{}]: {:.6e} vs {:.6e}", m.tensor, m.index, m.analytic, m.numeric),
                None => label.to_string(),
            };
        }
        Ok(())
    }
}

fn op_sweep(s: &mut Sweep) -> Result<(), String> {
    let full = GradCheckOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    for case in 0..20u64 {
        let n = rng.random_range(1..3);
        let (hh, hw) = (rng.random_range(1..4), rng.random_range(1..4));
        let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
        let x = rand_tensor(&mut rng, &[n, 2 * hh, 2 * hw, cin]);
        let k = rand_tensor(&mut rng, &[4, 4, cin, cout]);
        let kt = rand_tensor(&mut rng, &[4, 4, cin, cout]);
        s.run(&format!("conv2d+transpose #{case}"), vec![x, k, kt], full, move |g, v| {
            let y = g.conv2d(v[0], v[1], (2, 2), Padding::same_halving(4, 4))?;
            let z = g.conv2d_transpose(y, v[2], (2, 2), Padding::same_halving(4, 4))?;
            weighted_sum(g, z, case)
        })?;

        let t = 2 * rng.random_range(4..12);
        let (c1, c2) = (rng.random_range(1..3), rng.random_range(1..3));
        let kw = [31usize, 5, 4][case as usize % 3];
        let pad = Padding::same_halving_1d(kw);
        let x = rand_tensor(&mut rng, &[1, t, c1]);
        let k = rand_tensor(&mut rng, &[kw, c1, c2]);
        let kt = rand_tensor(&mut rng, &[kw, c1, c2]);
        s.run(&format!("conv1d+transpose #{case}"), vec![x, k, kt], full, move |g, v| {
            let y = g.conv1d(v[0], v[1], 2, pad)?;
            let z = g.conv1d_transpose(y, v[2], 2, pad)?;
            weighted_sum(g, z, case)
        })?;

        let (n, h, c, cb) = (rng.random_range(2..4), rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..3));
        let a = rand_tensor(&mut rng, &[n, h, c]);
        let b = rand_tensor(&mut rng, &[n, h, cb]);
        let bias = rand_tensor(&mut rng, &[c]);
        let gamma = rand_tensor(&mut rng, &[c]);
        let beta = rand_tensor(&mut rng, &[c]);
        s.run(&format!("pointwise/structural #{case}"), vec![a.clone(), b, bias], full, move |g, v| {
            let x = g.add_bias(v[0], v[2])?;
            let l = g.leaky_relu(x, 0.2);
            let r = g.relu(v[1]);
            let t = g.tanh(l);
            let cat = g.concat_channels(t, r)?;
            let sg = g.sigmoid(cat);
            let m = g.spatial_mean(sg)?;
            let sc = g.scale(m, 1.7);
            let both = g.add(sc, m)?;
            let shape = g.shape(both).to_vec();
            let flat = g.reshape(both, &[shape.iter().product()])?;
            let ws = weighted_sum(g, flat, case)?;
            let total = g.sum(cat);
            let mean = g.mean(v[0]);
            let tm = g.add(total, mean)?;
            g.add(ws, tm)
        })?;
        s.run(&format!("batch-norm #{case}"), vec![a, gamma, beta], full, move |g, v| {
            let y = g.batch_norm(v[0], v[1], v[2])?;
            weighted_sum(g, y, case)
        })?;

        let (n, m) = (rng.random_range(1..4), rng.random_range(1..9));
        let inputs = (0..4).map(|_| rand_tensor(&mut rng, &[n, m])).collect();
        s.run(&format!("losses #{case}"), inputs, full, |g, v| {
            let pr = g.sigmoid(v[0]);
            let pf = g.sigmoid(v[1]);
            let bd = g.gan_bce_d(pr, pf);
            let bg = g.gan_bce_g(pf);
            let ld = g.lsgan_d(v[0], v[1]);
            let lg = g.lsgan_g(v[1]);
            let l1 = g.l1_loss(v[2], v[3])?;
            let l1w = g.scale(l1, 100.0);
            let s1 = g.add(bd, bg)?;
            let s2 = g.add(ld, lg)?;
            let s3 = g.add(s1, s2)?;
            g.add(s3, l1w)
        })?;
    }
    Ok(())
}

fn to_f64(t: &Tensor<f32>) -> Tensor<f64> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| *v as f64).collect()).unwrap()
}

/// The complete generator objective, differentiated with respect to every
/// generator tensor, with the discriminator and data held fixed.
fn full_loss_case(s: &mut Sweep, label: String, model: ModelConfig, kind: AdversarialKind, batch: usize, seed: u64) -> Result<(), String> {
    let gp = init_params(&model, Role::Generator, seed).map_err(err)?;
    let dp = init_params(&model, Role::Discriminator, seed ^ 1).map_err(err)?;
    let (xs, ys) = model.example_shapes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let x = rand_tensor(&mut rng, &[&[batch][..], &xs].concat());
    let y = rand_tensor(&mut rng, &[&[batch][..], &ys].concat());
    // scale the tiny initial weights up so every layer's gradient is far above round-off
    let inputs: Vec<Tensor<f64>> = gp
        .tensors()
        .iter()
        .map(|t| {
            let mut t = to_f64(t);
            t.data_mut().iter_mut().for_each(|v| *v *= 10.0);
            t
        })
        .collect();
    let d64: Vec<Tensor<f64>> = dp.tensors().iter().map(to_f64).collect();
    let loss = GanLossConfig {
        adversarial: kind,
        ..GanLossConfig::default()
    };
    let opts = GradCheckOptions {
        max_per_tensor: Some(6),
        ..GradCheckOptions::default()
    };
    s.run(&label, inputs, opts, move |g, v| {
        let dv: Vec<Var> = d64.iter().map(|t| g.constant(t.clone())).collect();
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let terms = generator_loss(g, &model, &loss, v, &dv, xv, yv).map_err(|e| fsegan_autodiff::AutodiffError::Shape(e.to_string()))?;
        Ok(terms.total)
    })
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut s = Sweep::new();
    op_sweep(&mut s)?;
    let ops = s.cases;
    let mut rng = ChaCha8Rng::seed_from_u64(0x10559);
    for case in 0..10u64 {
        let kind = if case % 2 == 0 { AdversarialKind::Bce } else { AdversarialKind::Lsgan };
        let f = FseganConfig {
            depth: 4,
            base_channels: rng.random_range(1..4),
            channel_cap: 6,
            input_channels: rng.random_range(1..3),
            patch_frames: 16 * rng.random_range(1..3),
            patch_bins: 16,
            disc_base_channels: rng.random_range(1..3),
        };
        let batch = rng.random_range(1..3);
        full_loss_case(&mut s, format!("spectral G loss ({kind}) #{case}"), ModelConfig::Fsegan(f), kind, batch, case)?;
        let depth = rng.random_range(2..5);
        let w = SeganConfig {
            filter_width: [31, 5, 4][case as usize % 3],
            input_channels: rng.random_range(1..3),
            channels: (0..depth).map(|_| rng.random_range(1..4)).collect(),
            window_samples: (1 << depth) * rng.random_range(2..5),
        };
        let kind = if case % 2 == 0 { AdversarialKind::Lsgan } else { AdversarialKind::Bce };
        full_loss_case(&mut s, format!("waveform G loss ({kind}) #{case}"), ModelConfig::Segan(w), kind, batch, case + 100)?;
    }
    let elapsed = t.elapsed().as_secs_f64();
    check(
        s.worst < 1e-4 && elapsed < 120.0,
        format!(
            "{ops} op cases + {} full-loss cases, max rel error {:.2e} ({}), {elapsed:.1} s",
            s.cases - ops,
            s.worst,
            s.worst_case
        ),
    )
}

// ------------------------------------------------------------ criterion 3

fn loss_formulas() -> Outcome {
    let mut g = Graph::<f64>::new();
    let half = g.constant(Tensor::new(vec![2, 8], vec![0.5; 16]).unwrap());
    let bce = g.gan_bce_d(half, half);
    let bce = g.value(bce).item();
    let ones = g.constant(Tensor::new(vec![2, 8], vec![1.0; 16]).unwrap());
    let zeros = g.constant(Tensor::new(vec![2, 8], vec![0.0; 16]).unwrap());
    let ls = g.lsgan_d(ones, zeros);
    let ls = g.value(ls).item();

    // total in double precision through the library's objective
    let model = ModelConfig::Fsegan(FseganConfig::miniature());
    let gp = init_params(&model, Role::Generator, 3).map_err(err)?;
    let dp = init_params(&model, Role::Discriminator, 4).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_total = 0.0f64;
    for kind in [AdversarialKind::Bce, AdversarialKind::Lsgan] {
        let mut g = Graph::<f64>::new();
        let gv = gp.bind(&mut g, true);
        let dv = dp.bind(&mut g, false);
        let x = g.constant(rand_tensor(&mut rng, &[4, 16, 16, 2]));
        let y = g.constant(rand_tensor(&mut rng, &[4, 16, 16, 1]));
        let loss = GanLossConfig {
            adversarial: kind,
            ..GanLossConfig::default()
        };
        let terms = generator_loss(&mut g, &model, &loss, &gv, &dv, x, y).map_err(err)?;
        let (adv, l1, total) = (
            g.value(terms.adv.unwrap()).item(),
            g.value(terms.l1).item(),
            g.value(terms.total).item(),
        );
        worst_total = worst_total.max((total - (adv + 100.0 * l1)).abs());
    }

    // the single-precision totals the trainer reports, over a few real steps
    let mut cfg = TrainConfig::new(model);
    cfg.loss.adversarial = AdversarialKind::Bce;
    let mut st = TrainState::new(cfg).map_err(err)?;
    let mut worst_rel = 0.0f64;
    for _ in 0..5 {
        let x = Tensor::new(vec![4, 16, 16, 2], (0..2048).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let y = Tensor::new(vec![4, 16, 16, 1], (0..1024).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        st.d_step(&x, &y).map_err(err)?;
        let s = st.g_step(&x, &y).map_err(err)?;
        worst_rel = worst_rel.max((s.total - (s.adv + 100.0 * s.l1)).abs() / s.total);
    }

    let bce_err = (bce - 2.0 * std::f64::consts::LN_2).abs();
    check(
        bce_err <= 1e-9 && ls == 0.0 && worst_total <= 1e-5 && worst_rel < 1e-6,
        format!(
            "BCE(0.5) − 2ln2 = {bce_err:.1e}, LSGAN at separation = {ls}, |total − (adv + 100·l1)| ≤ {worst_total:.1e} (f64), trainer-reported relative gap ≤ {worst_rel:.1e} (f32)"
        ),
    )
}

// ------------------------------------------------------------ criteria 4–6

fn features(count: u64, split: Split, n_mel: usize, seed: u64) -> (Vec<(LogMelSpectrogram, LogMelSpectrogram)>, Vec<UtterancePair>) {
    let bank = NoiseBank::synthetic();
    let cfg = SynthConfig::default();
    let front = FrontEnd::new(StftConfig::default(), n_mel, DEFAULT_SAMPLE_RATE).unwrap();
    let pairs: Vec<UtterancePair> = (0..count).map(|i| build_pair(seed, i, split, &bank, &cfg).unwrap()).collect();
    let feats = pairs.iter().map(|p| pair_features(&front, &p.noisy, &p.clean).unwrap()).collect();
    (feats, pairs)
}

fn overfit() -> Outcome {
    let t = Instant::now();
    let (raw, _) = features(8, Split::Train, 16, 1);
    let (norm, _) = normalize_pairs(&raw, None).map_err(err)?;
    let cut: Vec<_> = norm.iter().map(|(n, c)| (n.slice_frames(20, 16), c.slice_frames(20, 16))).collect();
    let set = WindowSet::from_spectrograms(&cut, 16, 0.0).map_err(err)?;
    let mut cfg = TrainConfig::new(ModelConfig::Fsegan(FseganConfig::miniature()));
    cfg.loss.adversarial = AdversarialKind::None;
    cfg.g_lr = 1e-3;
    cfg.beta1 = 0.9;
    cfg.max_steps = 2000;
    cfg.eval_every = 25;
    cfg.patience = 1000;
    let mut first = None;
    let out = train(&cfg, &set, &set, &mut |r| {
        if let Some(v) = r.val_metric {
            if v < 0.05 && first.is_none() {
                first = Some(r.step);
            }
        }
    })
    .map_err(err)?;
    let elapsed = t.elapsed().as_secs_f64();
    check(
        first.is_some() && elapsed < 600.0,
        format!(
            "{} windows, training L1 first < 0.05 at step {first:?}, best {:.4} at step {}, {elapsed:.0} s",
            set.len(),
            out.best_metric,
            out.best_step
        ),
    )
}

struct EfficacyRun {
    ratio: f64,
    enhanced: f64,
    noisy: f64,
    best_step: usize,
    accuracy_tail: Vec<f64>,
    seconds: f64,
}

fn efficacy_runs() -> Result<(Vec<(AdversarialKind, EfficacyRun)>, f64), String> {
    let (raw, _) = features(200, Split::Train, 32, 5);
    let (_, test_pairs) = features(32, Split::Test, 32, 5);
    let (norm, stats) = normalize_pairs(&raw, None).map_err(err)?;
    let train_set = WindowSet::from_spectrograms(&norm[..184], 32, 0.5).map_err(err)?;
    let val_set = WindowSet::from_spectrograms(&norm[184..], 32, 0.0).map_err(err)?;
    let model = ModelConfig::Fsegan(FseganConfig {
        depth: 5,
        base_channels: 16,
        channel_cap: 128,
        input_channels: 2,
        patch_frames: 32,
        patch_bins: 32,
        disc_base_channels: 16,
    });
    let front = FrontEnd::new(StftConfig::default(), 32, DEFAULT_SAMPLE_RATE).unwrap();
    let score = |g: Option<&ModelParams>| -> Result<(f64, f64), String> {
        let (mut e, mut n) = (0.0, 0.0);
        for p in &test_pairs {
            let (lsd, _, _, noisy) = evaluate_pair(g, &front, &stats, &p.noisy, &p.clean).map_err(err)?;
            e += lsd;
            n += noisy;
        }
        Ok((e / test_pairs.len() as f64, n / test_pairs.len() as f64))
    };
    // all-zero generator = per-bin training mean: context for the ratio, not gated
    let (mean_lsd, mean_noisy) = score(Some(&zero_params(&model, Role::Generator)))?;

    let mut runs = Vec::new();
    for kind in [AdversarialKind::Bce, AdversarialKind::None] {
        let t = Instant::now();
        let mut cfg = TrainConfig::new(model.clone());
        cfg.loss.adversarial = kind;
        cfg.g_lr = 1e-3;
        cfg.d_lr = 1e-3;
        cfg.beta1 = 0.9;
        cfg.max_steps = 2000;
        cfg.eval_every = 250;
        cfg.patience = 100;
        cfg.seed = 5;
        let out = train(&cfg, &train_set, &val_set, &mut |_| {}).map_err(err)?;
        let (enhanced, noisy) = score(Some(&out.best_g))?;
        let acc = &out.d_accuracy;
        runs.push((
            kind,
            EfficacyRun {
                ratio: enhanced / noisy,
                enhanced,
                noisy,
                best_step: out.best_step,
                accuracy_tail: acc[acc.len().saturating_sub(100)..].to_vec(),
                seconds: t.elapsed().as_secs_f64(),
            },
        ));
    }
    Ok((runs, mean_lsd / mean_noisy))
}

fn efficacy(runs: &[(AdversarialKind, EfficacyRun)], mean_ratio: f64, data_s: f64) -> Outcome {
    let mut ok = data_s + runs.iter().map(|(_, r)| r.seconds).sum::<f64>() < 3600.0;
    let mut parts = Vec::new();
    for (kind, r) in runs {
        ok &= r.ratio <= 0.8;
        parts.push(format!(
            "{kind}: LSD {:.2} vs noisy {:.2} dB, ratio {:.3} (best step {}, {:.0} s)",
            r.enhanced, r.noisy, r.ratio, r.best_step, r.seconds
        ));
    }
    parts.push(format!("mean-spectrum baseline ratio {mean_ratio:.3}"));
    check(ok, parts.join("; "))
}

fn non_degeneracy(runs: &[(AdversarialKind, EfficacyRun)]) -> Outcome {
    let (_, r) = runs
        .iter()
        .find(|(k, _)| *k == AdversarialKind::Bce)
        .ok_or("no adversarial run")?;
    let n = r.accuracy_tail.len();
    let pooled = r.accuracy_tail.iter().sum::<f64>() / n as f64;
    let lo = r.accuracy_tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.accuracy_tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check(
        n == 100 && pooled > 0.55 && pooled < 0.99,
        format!("D accuracy over final {n} steps {pooled:.3} (per-step range {lo:.2}–{hi:.2})"),
    )
}

// ------------------------------------------------------------ criterion 7

fn dsp_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let bank = NoiseBank::synthetic();
    let mut worst_snr = 0.0f64;
    for i in 0..100u64 {
        let clean = synth_clean_utterance(rng.random(), rng.random_range(1.0..2.0)).map_err(err)?;
        let room = sample_room(rng.random(), Split::Train);
        let rir = rir_image_source(&room, &room.speech_pos, 3).map_err(err)?.high_passed(RIR_HIGHPASS_HZ);
        let nrir = rir_image_source(&room, &room.noise_pos, 3).map_err(err)?.high_passed(RIR_HIGHPASS_HZ);
        let speech = convolve_rir(&clean, &rir).map_err(err)?;
        let noise = convolve_rir(&bank.draw(clean.len(), &mut rng).map_err(err)?, &nrir).map_err(err)?;
        let snr = rng.random_range(-5.0..30.0);
        let mixed = mix_at_snr(&speech, &noise, snr).map_err(err)?;
        let (mut ps, mut pn) = (0.0, 0.0);
        for c in 0..2 {
            for (m, s) in mixed.channel(c).iter().zip(speech.channel(c)) {
                ps += s * s;
                pn += (m - s) * (m - s);
            }
        }
        let measured = 10.0 * (ps / pn).log10();
        worst_snr = worst_snr.max((measured - snr).abs());
        let _ = i;
    }

    let mut t60s = Vec::new();
    let mut t60_ok = true;
    for target in [0.2, 0.5, 0.8] {
        let room = RoomConfig {
            dims: [4.0, 3.5, 3.0],
            t60: target,
            speech_pos: [1.0, 1.2, 1.5],
            noise_pos: [3.0, 0.8, 1.0],
            mic_l: [2.85, 2.3, 1.3],
            mic_r: [2.95, 2.3, 1.3],
            room_id: 0,
            split: Split::Train,
        };
        let rir = rir_image_source(&room, &room.speech_pos, 100).map_err(err)?.high_passed(RIR_HIGHPASS_HZ);
        let est = estimate_t60(&rir.taps[0], DEFAULT_SAMPLE_RATE).ok_or("decay curve too short")?;
        t60_ok &= (est - target).abs() / target <= 0.2;
        t60s.push(format!("{target}→{est:.3}"));
    }

    let mut worst_rt = 0.0f64;
    for case in 0..20usize {
        let frames = rng.random_range(1..400);
        let bins = 16;
        let vals: Vec<f64> = (0..frames * bins * 2).map(|_| rng.random_range(-20.0..5.0)).collect();
        let spec = LogMelSpectrogram::new(frames, bins, 2, vals, false, 0.01).map_err(err)?;
        let stats = NormStats {
            mean: (0..bins).map(|_| rng.random_range(-10.0..0.0)).collect(),
            std: (0..bins).map(|_| rng.random_range(0.5..4.0)).collect(),
        };
        let back = denormalize(&normalize(&spec, &stats).map_err(err)?, &stats).map_err(err)?;
        for (a, b) in back.values().iter().zip(spec.values()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
        let width = [16, 32, 128][case % 3];
        let (patches, placement) = frame_windows(&spec, width, 0.0).map_err(err)?;
        let whole = reassemble(&patches, &placement, frames).map_err(err)?;
        for (a, b) in whole.values().iter().zip(spec.values()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
        if whole.n_frames() != frames {
            return Err(format!("reassembled {} of {frames} frames", whole.n_frames()));
        }
    }

    check(
        worst_snr < 0.01 && t60_ok && worst_rt <= 1e-6,
        format!(
            "SNR error ≤ {worst_snr:.1e} dB over 100 pairs; T60 (order 100) {}; round-trip error ≤ {worst_rt:.1e}",
            t60s.join(", ")
        ),
    )
}

// ------------------------------------------------------------ criteria 8–9

fn fsegan(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fsegan"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(())
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(err)?;
    fs::write(dir.join("synth.cfg"), "min_duration_s = 1.0\nmax_duration_s = 1.5\n").map_err(err)?;
    fs::write(dir.join("feat.cfg"), "n_mel = 16\n").map_err(err)?;
    fs::write(
        dir.join("train.cfg"),
        "depth = 4\nbase_channels = 8\nchannel_cap = 32\ndisc_base_channels = 8\npatch_frames = 16\nbatch = 4\neval_every = 50\n",
    )
    .map_err(err)?;
    for args in [
        &["synth", "--config", "synth.cfg", "--split", "train", "--count", "6", "--seed", "42", "--out", "wav"][..],
        &["synth", "--config", "synth.cfg", "--split", "test", "--count", "3", "--seed", "42", "--out", "twav"],
        &["featurize", "--config", "feat.cfg", "--in", "wav", "--out", "feat"],
        &["featurize", "--config", "feat.cfg", "--in", "twav", "--stats", "feat/stats.nsta", "--out", "tfeat"],
        &["train", "--config", "train.cfg", "--seed", "42", "--steps", "200", "--in", "feat", "--out", "run"],
        &["eval", "--ckpt", "run/generator.ckpt", "--in", "twav", "--stats", "feat/stats.nsta", "--out", "eval"],
    ] {
        fsegan(args, dir)?;
    }
    Ok(())
}

fn determinism(root: &Path) -> Outcome {
    let (a, b) = (root.join("a"), root.join("b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let (ta, tb) = (tree(&a), tree(&b));
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let kinds = ["manifest.tsv", ".lmfb", "history.tsv", "report.tsv", ".ckpt"];
    let counts: Vec<String> = kinds
        .iter()
        .map(|k| format!("{} {k}", ta.iter().filter(|(p, _)| p.to_string_lossy().ends_with(k)).count()))
        .collect();
    check(
        ta.len() == tb.len() && differing.is_empty(),
        format!(
            "{} files byte-identical across two runs ({}){}",
            ta.len(),
            counts.join(", "),
            if differing.is_empty() { String::new() } else { format!("; differing: {differing:?}") }
        ),
    )
}

fn hybrid(root: &Path) -> Outcome {
    let dir = root.join("a");
    fsegan(&["enhance", "--ckpt", "run/generator.ckpt", "--in", "tfeat/test_00000_noisy.lmfb", "--out", "enhanced.lmfb"], &dir)?;
    fsegan(&["export-hybrid", "--ckpt", "run/generator.ckpt", "--in", "tfeat/test_00000_noisy.lmfb", "--out", "hybrid.lmfb"], &dir)?;
    let noisy = load_features(&dir.join("tfeat/test_00000_noisy.lmfb")).map_err(err)?;
    let enhanced = load_features(&dir.join("enhanced.lmfb")).map_err(err)?;
    let h = load_features(&dir.join("hybrid.lmfb")).map_err(err)?;
    // the library path must agree with the CLI file as well
    let g = load_checkpoint(&dir.join("run/generator.ckpt")).map_err(err)?;
    let direct = enhance_features(&g, &noisy).map_err(err)?;
    let bits = |a: &LogMelSpectrogram, b: &LogMelSpectrogram| {
        a.n_frames() == b.n_frames() && a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
    };
    let ch0 = bits(&h.channel(0).map_err(err)?, &enhanced) && bits(&enhanced, &direct);
    let ch12 = bits(&h.select_channels(&[1, 2]).map_err(err)?, &noisy);
    check(
        h.n_channels() == 3 && ch0 && ch12,
        format!(
            "{} channels × {} frames × {} bins; channel 0 bitwise = enhanced: {ch0}; channels 1–2 bitwise = noisy: {ch12}",
            h.n_channels(),
            h.n_frames(),
            h.n_bins()
        ),
    )
}

// ------------------------------------------------------------ driver

fn report(results: &mut Vec<bool>, n: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // written straight to the process stream so it shows without --nocapture
    let line = format!("[{tag}] criterion {n} — {name}: {detail} [{:.1} s]\n", t.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    results.push(outcome.is_ok());
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    report(&mut results, 1, "architecture", architecture);
    report(&mut results, 2, "gradient correctness", gradients);
    report(&mut results, 3, "loss formulas", loss_formulas);
    report(&mut results, 4, "overfit sanity", overfit);

    let t = Instant::now();
    let runs = catch_unwind(efficacy_runs).unwrap_or_else(|_| Err("efficacy harness panicked".into()));
    let data_and_training = t.elapsed().as_secs_f64();
    match &runs {
        Ok((r, mean_ratio)) => {
            let total: f64 = r.iter().map(|(_, x)| x.seconds).sum();
            report(&mut results, 5, "enhancement efficacy", || efficacy(r, *mean_ratio, data_and_training - total));
            report(&mut results, 6, "GAN non-degeneracy", || non_degeneracy(r));
        }
        Err(e) => {
            report(&mut results, 5, "enhancement efficacy", || Err(e.clone()));
            report(&mut results, 6, "GAN non-degeneracy", || Err(e.clone()));
        }
    }

    report(&mut results, 7, "DSP invariants", dsp_invariants);
    let dir = tempfile::tempdir().unwrap();
    report(&mut results, 8, "pipeline determinism", || determinism(dir.path()));
    report(&mut results, 9, "hybrid export", || hybrid(dir.path()));

    let passed = results.iter().filter(|r| **r).count();
    let _ = std::io::stderr().write_all(format!("acceptance: {passed}/{} criteria passed\n", results.len()).as_bytes());
    assert_eq!(passed, results.len(), "{} acceptance criteria failed", results.len() - passed);
}
