use std::path::{Path, PathBuf};

use fsegan_core::dsp::{
    denormalize, load_features, load_stats, load_wav, normalize, save_features, save_stats, save_wav, FrontEnd,
    NormStats, StftConfig, DEFAULT_SAMPLE_RATE,
};
use fsegan_core::fsio;
use fsegan_core::metrics::{enhance_features, enhance_waveform, evaluate_corpus, hybrid_export, spectrogram_image};
use fsegan_core::models::{load_checkpoint, save_checkpoint, FseganConfig, ModelConfig, ModelKind, ModelParams, SeganConfig};
use fsegan_core::pipeline::{featurize_corpus, load_manifest_audio, FeatureManifest, FEATURE_MANIFEST_NAME};
use fsegan_core::synth::{write_corpus, Manifest, NoiseBank, Reverb, Split, SynthConfig, DEFAULT_MAX_ORDER, MANIFEST_NAME};
use fsegan_core::train::{history_text, AdversarialKind, HistoryRow, TrainConfig, WindowSet};

use crate::config::Settings;
use crate::{CliError, EnhanceArgs, EvalArgs, FeaturizeArgs, HybridArgs, RenderArgs, SynthArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

pub const STATS_NAME: &str = "stats.nsta";
pub const REPORT_NAME: &str = "report.tsv";
pub const HISTORY_NAME: &str = "history.tsv";
pub const GENERATOR_NAME: &str = "generator.ckpt";
pub const DISCRIMINATOR_NAME: &str = "discriminator.ckpt";

/// A directory argument resolves to the named file inside it.
fn file_in(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn write_echo_in_dir(dir: &Path, command: &str, settings: &Settings, paths: &[(&str, Option<&Path>)]) -> Result<()> {
    fsio::create_dir_all(dir)?;
    let text = settings.render(command, paths);
    fsio::write_atomic(&dir.join(format!("{command}.cfg")), text.as_bytes())?;
    Ok(())
}

/// File outputs get their effective config alongside: `out.pgm` → `out.pgm.cfg`.
fn write_echo_beside(out: &Path, command: &str, settings: &Settings, paths: &[(&str, Option<&Path>)]) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".cfg");
    fsio::write_atomic(Path::new(&name), settings.render(command, paths).as_bytes())?;
    Ok(())
}

fn front_end_defaults() -> Vec<(&'static str, String)> {
    let stft = StftConfig::default();
    vec![
        ("window_len", stft.window_len.to_string()),
        ("hop", stft.hop.to_string()),
        ("fft_size", stft.fft_size.to_string()),
    ]
}

fn front_end(s: &Settings, n_mel: usize) -> Result<FrontEnd> {
    let stft = StftConfig {
        window_len: s.get("window_len")?,
        hop: s.get("hop")?,
        fft_size: s.get("fft_size")?,
        ..StftConfig::default()
    };
    Ok(FrontEnd::new(stft, n_mel, DEFAULT_SAMPLE_RATE)?)
}

fn as_refs<'a>(v: &'a [(&'static str, String)]) -> Vec<(&'static str, &'a str)> {
    v.iter().map(|(k, s)| (*k, s.as_str())).collect()
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let defaults = vec![
        ("seed", "0".to_string()),
        ("split", "train".into()),
        ("count", "8".into()),
        ("min_duration_s", d.min_duration_s.to_string()),
        ("max_duration_s", d.max_duration_s.to_string()),
        ("reverb", "simulated".into()),
        ("max_order", DEFAULT_MAX_ORDER.to_string()),
        ("snr_db", "sampled".into()),
        ("noise_wavs", String::new()),
    ];
    let s = Settings::resolve(
        &as_refs(&defaults),
        a.config.as_deref(),
        &[("seed", a.seed.clone()), ("split", a.split.clone()), ("count", a.count.clone())],
    )?;
    let reverb = match s.raw("reverb") {
        "simulated" => Reverb::Simulated {
            max_order: s.get("max_order")?,
        },
        "direct" => Reverb::DirectOnly,
        o => return Err(CliError::Usage(format!("reverb must be simulated or direct, got {o:?}"))),
    };
    let cfg = SynthConfig {
        min_duration_s: s.get("min_duration_s")?,
        max_duration_s: s.get("max_duration_s")?,
        reverb,
        fixed_snr_db: match s.raw("snr_db") {
            "sampled" => None,
            _ => Some(s.get("snr_db")?),
        },
        ..d
    };
    let mut bank = NoiseBank::synthetic();
    let wavs: Vec<&str> = s.raw("noise_wavs").split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if !wavs.is_empty() {
        let clips = wavs.iter().map(|p| load_wav(Path::new(p))).collect::<fsegan_core::Result<Vec<_>>>()?;
        bank = bank.with_recordings(&clips)?;
    }
    let split: Split = s.get("split")?;
    let count: u64 = s.get("count")?;
    write_echo_in_dir(&a.out, "synth", &s, &[])?;
    let manifest = write_corpus(&a.out, split, count, s.get("seed")?, &bank, &cfg)?;
    println!("wrote {} {split} pairs to {}", manifest.entries.len(), a.out.display());
    Ok(())
}

pub fn featurize(a: &FeaturizeArgs) -> Result<()> {
    let mut defaults = front_end_defaults();
    defaults.push(("n_mel", "128".into()));
    let s = Settings::resolve(&as_refs(&defaults), a.config.as_deref(), &[])?;
    let manifest = Manifest::load(&file_in(&a.input, MANIFEST_NAME))?;
    let stats = a.stats.as_deref().map(load_stats).transpose()?;
    let front = front_end(&s, s.get("n_mel")?)?;
    write_echo_in_dir(&a.out, "featurize", &s, &[("in", Some(&a.input)), ("stats", a.stats.as_deref())])?;
    let (fm, stats) = featurize_corpus(&manifest, &front, stats.as_ref(), &a.out)?;
    save_stats(&stats, &a.out.join(STATS_NAME))?;
    println!("wrote {} feature pairs ({} bins) to {}", fm.entries.len(), front.n_bins(), a.out.display());
    Ok(())
}

/// Splits off the last `fraction` of the pairs (at least one, never all) for validation.
fn split_validation<T: Clone>(items: Vec<T>, fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(CliError::Usage(format!("val_fraction must be in [0, 1), got {fraction}")));
    }
    if items.len() < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 training pairs to hold out validation data, found {}",
            items.len()
        )));
    }
    let n_val = ((items.len() as f64 * fraction).round() as usize).clamp(1, items.len() - 1);
    let mut train = items;
    let val = train.split_off(train.len() - n_val);
    Ok((train, val))
}

fn train_defaults() -> Vec<(&'static str, String)> {
    let f = FseganConfig::default();
    let w = SeganConfig::default();
    let t = TrainConfig::new(ModelConfig::Fsegan(f.clone()));
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    vec![
        ("model", "fsegan".into()),
        ("loss", "gan".into()),
        ("depth", "auto".into()),
        ("base_channels", f.base_channels.to_string()),
        ("channel_cap", f.channel_cap.to_string()),
        ("disc_base_channels", f.disc_base_channels.to_string()),
        ("patch_frames", f.patch_frames.to_string()),
        ("patch_bins", "auto".into()),
        ("segan_channels", join(&w.channels)),
        ("filter_width", w.filter_width.to_string()),
        ("window_samples", w.window_samples.to_string()),
        ("batch", t.batch_size.to_string()),
        ("steps", t.max_steps.to_string()),
        ("d_steps_per_g", t.d_steps_per_g.to_string()),
        ("eval_every", t.eval_every.to_string()),
        ("patience", t.patience.to_string()),
        ("seed", t.seed.to_string()),
        ("g_lr", t.g_lr.to_string()),
        ("d_lr", t.d_lr.to_string()),
        ("beta1", t.beta1.to_string()),
        ("l1_weight", t.loss.l1_weight.to_string()),
        ("overlap", "0.5".into()),
        ("val_fraction", "0.1".into()),
    ]
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut s = Settings::resolve(
        &as_refs(&train_defaults()),
        a.config.as_deref(),
        &[
            ("seed", a.seed.clone()),
            ("model", a.model.clone()),
            ("loss", a.loss.clone()),
            ("depth", a.depth.clone()),
            ("batch", a.batch.clone()),
            ("steps", a.steps.clone()),
        ],
    )?;
    let kind: ModelKind = s.get("model")?;
    let overlap: f64 = s.get("overlap")?;
    let val_fraction: f64 = s.get("val_fraction")?;
    let (model, train_set, val_set) = match kind {
        ModelKind::Fsegan => {
            let fm = FeatureManifest::load(&file_in(&a.input, FEATURE_MANIFEST_NAME))?;
            let fm = FeatureManifest {
                entries: fm.entries.into_iter().filter(|e| e.split == Split::Train).collect(),
                root: fm.root,
            };
            let (train_pairs, val_pairs) = split_validation(fm.load_pairs()?, val_fraction)?;
            let (bins, channels) = (train_pairs[0].0.n_bins(), train_pairs[0].0.n_channels());
            let cfg = FseganConfig {
                depth: s.get_auto("depth")?.unwrap_or(FseganConfig::default().depth),
                base_channels: s.get("base_channels")?,
                channel_cap: s.get("channel_cap")?,
                input_channels: channels,
                patch_frames: s.get("patch_frames")?,
                patch_bins: s.get_auto("patch_bins")?.unwrap_or(bins),
                disc_base_channels: s.get("disc_base_channels")?,
            };
            s.set_resolved("depth", cfg.depth);
            s.set_resolved("patch_bins", cfg.patch_bins);
            let width = cfg.patch_frames;
            let train_set = WindowSet::from_spectrograms(&train_pairs, width, overlap)?;
            let val_set = WindowSet::from_spectrograms(&val_pairs, width, 0.0)?;
            (ModelConfig::Fsegan(cfg), train_set, val_set)
        }
        ModelKind::Segan => {
            let m = Manifest::load(&file_in(&a.input, MANIFEST_NAME))?;
            let m = Manifest {
                entries: m.entries.into_iter().filter(|e| e.split == Split::Train).collect(),
                root: m.root,
            };
            let (train_pairs, val_pairs) = split_validation(load_manifest_audio(&m)?, val_fraction)?;
            let schedule: Vec<usize> = s
                .raw("segan_channels")
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("bad segan_channels {:?}", s.raw("segan_channels"))))?;
            let depth = s.get_auto("depth")?.unwrap_or(schedule.len());
            if depth == 0 || depth > schedule.len() {
                return Err(CliError::Usage(format!(
                    "depth {depth} outside 1–{} for the waveform channel schedule",
                    schedule.len()
                )));
            }
            s.set_resolved("depth", depth);
            let cfg = SeganConfig {
                filter_width: s.get("filter_width")?,
                input_channels: train_pairs[0].0.n_channels(),
                channels: schedule[..depth].to_vec(),
                window_samples: s.get("window_samples")?,
            };
            let train_set = WindowSet::from_waveforms(&train_pairs, cfg.window_samples, overlap)?;
            let val_set = WindowSet::from_waveforms(&val_pairs, cfg.window_samples, 0.0)?;
            (ModelConfig::Segan(cfg), train_set, val_set)
        }
    };
    let mut cfg = TrainConfig::new(model);
    cfg.loss.adversarial = s.get::<AdversarialKind>("loss")?;
    cfg.loss.l1_weight = s.get("l1_weight")?;
    cfg.batch_size = s.get("batch")?;
    cfg.max_steps = s.get("steps")?;
    cfg.d_steps_per_g = s.get("d_steps_per_g")?;
    cfg.eval_every = s.get("eval_every")?;
    cfg.patience = s.get("patience")?;
    cfg.seed = s.get("seed")?;
    cfg.g_lr = s.get("g_lr")?;
    cfg.d_lr = s.get("d_lr")?;
    cfg.beta1 = s.get("beta1")?;
    cfg.validate()?;

    write_echo_in_dir(&a.out, "train", &s, &[("in", Some(&a.input))])?;
    println!(
        "training {} on {} windows ({} validation), {} steps",
        cfg.model.kind(),
        train_set.len(),
        val_set.len(),
        cfg.max_steps
    );
    let mut log = |r: &HistoryRow| {
        if let Some(v) = r.val_metric {
            let d = r.d_loss.map_or_else(|| "-".to_string(), |d| format!("{d:.4}"));
            println!("step {:>6}  d {d}  adv {:.4}  l1 {:.4}  val {v:.6}", r.step, r.adv_loss, r.l1_loss);
        }
    };
    let out = fsegan_core::train::train(&cfg, &train_set, &val_set, &mut log)?;
    save_checkpoint(&out.best_g, &a.out.join(GENERATOR_NAME))?;
    if let Some(d) = &out.state.d {
        save_checkpoint(d, &a.out.join(DISCRIMINATOR_NAME))?;
    }
    fsio::write_atomic(&a.out.join(HISTORY_NAME), history_text(&out.history).as_bytes())?;
    println!(
        "best validation metric {:.6} at step {}{}",
        out.best_metric,
        out.best_step,
        if out.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

fn load_generator(path: &Path) -> Result<ModelParams> {
    let g = load_checkpoint(path)?;
    if g.role() != fsegan_core::models::Role::Generator {
        return Err(CliError::Core(fsegan_core::Error::DomainMismatch(format!(
            "{} holds a discriminator",
            path.display()
        ))));
    }
    Ok(g)
}

pub fn enhance(a: &EnhanceArgs) -> Result<()> {
    let s = Settings::resolve(&[], a.config.as_deref(), &[])?;
    let g = load_generator(&a.ckpt)?;
    let paths = [("ckpt", Some(a.ckpt.as_path())), ("in", Some(a.input.as_path())), ("stats", a.stats.as_deref())];
    match g.config() {
        ModelConfig::Fsegan(_) => {
            let x = load_features(&a.input)?;
            let y = if x.normalized {
                enhance_features(&g, &x)?
            } else {
                let stats: NormStats = match &a.stats {
                    Some(p) => load_stats(p)?,
                    None => {
                        return Err(CliError::Usage(
                            "input features are not normalized; pass --stats from the training split".into(),
                        ))
                    }
                };
                denormalize(&enhance_features(&g, &normalize(&x, &stats)?)?, &stats)?
            };
            save_features(&y, &a.out)?;
            println!("enhanced {} frames → {}", y.n_frames(), a.out.display());
        }
        ModelConfig::Segan(_) => {
            let y = enhance_waveform(&g, &load_wav(&a.input)?)?;
            save_wav(&y, &a.out)?;
            println!("enhanced {} samples → {}", y.len(), a.out.display());
        }
    }
    write_echo_beside(&a.out, "enhance", &s, &paths)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let s = Settings::resolve(&as_refs(&front_end_defaults()), a.config.as_deref(), &[])?;
    let g = match &a.ckpt {
        Some(p) if p.as_os_str() != "none" => Some(load_generator(p)?),
        _ => None,
    };
    let stats = load_stats(&a.stats)?;
    let manifest = Manifest::load(&file_in(&a.input, MANIFEST_NAME))?;
    let front = front_end(&s, stats.n_bins())?;
    write_echo_in_dir(
        &a.out,
        "eval",
        &s,
        &[("ckpt", a.ckpt.as_deref()), ("in", Some(&a.input)), ("stats", Some(&a.stats))],
    )?;
    let report = evaluate_corpus(g.as_ref(), &manifest, &front, &stats)?;
    fsio::write_atomic(&a.out.join(REPORT_NAME), report.to_text().as_bytes())?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: {} utterances, mean LSD {} dB (noisy {} dB, improvement {} dB), {} missing",
        report.system,
        report.rows.len(),
        fmt(report.mean_lsd()),
        fmt(report.mean_noisy_lsd()),
        fmt(report.improvement_db()),
        report.missing.len()
    );
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let s = Settings::resolve(&[("channel", "0")], a.config.as_deref(), &[])?;
    let spec = load_features(&a.input)?;
    let c: usize = s.get("channel")?;
    if c >= spec.n_channels() {
        return Err(CliError::Usage(format!("channel {c} out of range ({} channels)", spec.n_channels())));
    }
    spectrogram_image(&spec.channel(c)?, &a.out)?;
    write_echo_beside(&a.out, "render", &s, &[("in", Some(&a.input))])?;
    println!("{}×{} image → {}", spec.n_frames(), spec.n_bins(), a.out.display());
    Ok(())
}

pub fn export_hybrid(a: &HybridArgs) -> Result<()> {
    let s = Settings::resolve(&[], a.config.as_deref(), &[])?;
    let g = load_generator(&a.ckpt)?;
    let noisy = load_features(&a.input)?;
    let enhanced = enhance_features(&g, &noisy)?;
    let h = hybrid_export(&noisy, &enhanced, &a.out)?;
    write_echo_beside(&a.out, "export-hybrid", &s, &[("ckpt", Some(&a.ckpt)), ("in", Some(&a.input))])?;
    println!("{}-channel hybrid features → {}", h.n_channels(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_rules() {
        let (t, v) = split_validation((0..10).collect(), 0.1).unwrap();
        assert_eq!((t.len(), v), (9, vec![9]));
        let (t, v) = split_validation((0..3).collect(), 0.0).unwrap();
        assert_eq!((t.len(), v.len()), (2, 1));
        let (t, v) = split_validation((0..3).collect(), 0.9).unwrap();
        assert_eq!((t.len(), v.len()), (1, 2));
        assert!(split_validation(vec![1], 0.1).is_err());
        assert!(split_validation((0..4).collect(), 1.0).is_err());
    }
}
