//! Enhancement, distances between spectrograms and waveforms, images, and
//! corpus reports.

use std::f64::consts::LN_10;
use std::fmt::Write as _;
use std::path::Path;

use fsegan_autodiff::Tensor;

use crate::dsp::{denormalize, frame_windows, load_wav, normalize, reassemble, AudioClip, FrontEnd, LogMelSpectrogram, NormStats};
use crate::error::{Error, Result};
use crate::fsio;
use crate::models::{run_generator, ModelConfig, ModelParams, Role};
use crate::pipeline::pair_features;
use crate::synth::Manifest;

/// Per-frame segmental SNR bounds in dB.
pub const SEG_SNR_FLOOR: f64 = -10.0;
pub const SEG_SNR_CEIL: f64 = 35.0;
/// Reference frames with less energy than this are treated as silence.
pub const SILENCE_ENERGY: f64 = 1e-10;

/// Log-spectral distance in dB between two mono log-Mel spectrograms holding
/// natural-log energies: frame-wise RMS of `10/ln 10 · (a − b)`, averaged.
pub fn lsd(a: &LogMelSpectrogram, b: &LogMelSpectrogram) -> Result<f64> {
    if a.n_frames() != b.n_frames() || a.n_bins() != b.n_bins() || a.n_channels() != 1 || b.n_channels() != 1 {
        return Err(Error::Dimension(format!(
            "lsd needs equal mono grids, got {}×{}×{} and {}×{}×{}",
            a.n_frames(),
            a.n_bins(),
            a.n_channels(),
            b.n_frames(),
            b.n_bins(),
            b.n_channels()
        )));
    }
    if a.n_frames() == 0 {
        return Err(Error::Empty("lsd of zero frames".into()));
    }
    let k = 10.0 / LN_10;
    let total: f64 = (0..a.n_frames())
        .map(|t| {
            let ms = a
                .frame(t)
                .iter()
                .zip(b.frame(t))
                .map(|(x, y)| (k * (x - y)).powi(2))
                .sum::<f64>()
                / a.n_bins() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / a.n_frames() as f64)
}

/// Mean per-frame SNR of `est` against `reference`, each frame clamped to
/// [−10, 35] dB; silent reference frames are skipped.
pub fn seg_snr(reference: &[f64], est: &[f64], frame: usize, hop: usize) -> Result<f64> {
    if reference.len() != est.len() {
        return Err(Error::Dimension(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            est.len()
        )));
    }
    if frame == 0 || hop == 0 {
        return Err(Error::Config("frame and hop must be positive".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    let mut start = 0;
    while start + frame <= reference.len() {
        let r = &reference[start..start + frame];
        let e = &est[start..start + frame];
        let signal: f64 = r.iter().map(|v| v * v).sum();
        if signal > SILENCE_ENERGY {
            let err: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
            let db = if err > 0.0 { 10.0 * (signal / err).log10() } else { f64::INFINITY };
            sum += db.clamp(SEG_SNR_FLOOR, SEG_SNR_CEIL);
            n += 1;
        }
        start += hop;
    }
    if n == 0 {
        return Err(Error::NoVoicedFrames);
    }
    Ok(sum / n as f64)
}

/// Enhances normalized noisy features with a spectral generator: windows of
/// the checkpoint's patch width without overlap, one batched forward pass,
/// padding trimmed. Returns normalized mono features of the same length.
pub fn enhance_features(g: &ModelParams, noisy: &LogMelSpectrogram) -> Result<LogMelSpectrogram> {
    let ModelConfig::Fsegan(cfg) = g.config() else {
        return Err(Error::DomainMismatch("waveform checkpoint cannot enhance spectral features".into()));
    };
    if g.role() != Role::Generator {
        return Err(Error::DomainMismatch("checkpoint holds a discriminator".into()));
    }
    if !noisy.normalized {
        return Err(Error::NormState("enhancement expects normalized features".into()));
    }
    if noisy.n_bins() != cfg.patch_bins || noisy.n_channels() != cfg.input_channels {
        return Err(Error::Dimension(format!(
            "features have {} bins × {} channels, generator expects {} × {}",
            noisy.n_bins(),
            noisy.n_channels(),
            cfg.patch_bins,
            cfg.input_channels
        )));
    }
    let (patches, placement) = frame_windows(noisy, cfg.patch_frames, 0.0)?;
    let data: Vec<f32> = patches.iter().flat_map(|p| p.values().iter().map(|v| *v as f32)).collect();
    let x = Tensor::new(vec![patches.len(), cfg.patch_frames, cfg.patch_bins, cfg.input_channels], data)?;
    let y = run_generator(g, x)?;
    let per = cfg.patch_frames * cfg.patch_bins;
    let outs = y
        .data()
        .chunks_exact(per)
        .map(|c| {
            LogMelSpectrogram::new(
                cfg.patch_frames,
                cfg.patch_bins,
                1,
                c.iter().map(|v| *v as f64).collect(),
                true,
                noisy.frame_hop_s,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    reassemble(&outs, &placement, noisy.n_frames())
}

/// Enhances a multichannel waveform with a waveform generator, window by
/// window without overlap; returns a mono clip of the same length.
pub fn enhance_waveform(g: &ModelParams, noisy: &AudioClip) -> Result<AudioClip> {
    let ModelConfig::Segan(cfg) = g.config() else {
        return Err(Error::DomainMismatch("spectral checkpoint cannot enhance waveforms".into()));
    };
    if noisy.n_channels() != cfg.input_channels {
        return Err(Error::Dimension(format!(
            "clip has {} channels, generator expects {}",
            noisy.n_channels(),
            cfg.input_channels
        )));
    }
    let (w, ch, n) = (cfg.window_samples, cfg.input_channels, noisy.len());
    let windows = n.div_ceil(w).max(1);
    let mut data = vec![0.0f32; windows * w * ch];
    for t in 0..n {
        for c in 0..ch {
            data[t * ch + c] = noisy.channel(c)[t] as f32;
        }
    }
    let y = run_generator(g, Tensor::new(vec![windows, w, ch], data)?)?;
    let out = y.data()[..n].iter().map(|v| *v as f64).collect();
    AudioClip::mono(out, noisy.sample_rate())
}

/// 8-bit binary PGM: time runs left to right, Mel bin 0 sits on the bottom
/// row, values are min-max scaled per image (a constant image is mid-gray).
pub fn spectrogram_pgm(spec: &LogMelSpectrogram) -> Result<Vec<u8>> {
    if spec.n_channels() != 1 {
        return Err(Error::Dimension(format!("image needs one channel, got {}", spec.n_channels())));
    }
    if spec.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidAudio("spectrogram holds non-finite values".into()));
    }
    let (w, h) = (spec.n_frames(), spec.n_bins());
    let lo = spec.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = spec.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in 0..h {
        let bin = h - 1 - row;
        for t in 0..w {
            let v = spec.get(t, bin, 0);
            let px = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 };
            out.push(px);
        }
    }
    Ok(out)
}

pub fn spectrogram_image(spec: &LogMelSpectrogram, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &spectrogram_pgm(spec)?)
}

/// Stacks enhanced (channel 0) and noisy (channels 1…) features for
/// retraining on both representations.
pub fn hybrid_features(noisy: &LogMelSpectrogram, enhanced: &LogMelSpectrogram) -> Result<LogMelSpectrogram> {
    if enhanced.n_channels() != 1 {
        return Err(Error::Dimension(format!("enhanced features have {} channels", enhanced.n_channels())));
    }
    if enhanced.n_frames() != noisy.n_frames() {
        return Err(Error::Dimension(format!(
            "enhanced has {} frames, noisy {}",
            enhanced.n_frames(),
            noisy.n_frames()
        )));
    }
    enhanced.stack(noisy)
}

pub fn hybrid_export(noisy: &LogMelSpectrogram, enhanced: &LogMelSpectrogram, path: &Path) -> Result<LogMelSpectrogram> {
    let h = hybrid_features(noisy, enhanced)?;
    crate::dsp::save_features(&h, path)?;
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub index: u64,
    pub lsd_db: f64,
    /// Mean absolute difference in normalized feature space.
    pub l1: f64,
    pub seg_snr_db: Option<f64>,
    /// LSD of the unprocessed noisy input (first microphone).
    pub noisy_lsd_db: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    /// What produced the estimates: a checkpoint tag or "none".
    pub system: String,
    pub rows: Vec<MetricRow>,
    pub missing: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    pub fn mean_lsd(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.lsd_db))
    }

    pub fn mean_l1(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.l1))
    }

    pub fn mean_seg_snr(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|r| r.seg_snr_db))
    }

    pub fn mean_noisy_lsd(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.noisy_lsd_db))
    }

    /// Mean noisy LSD minus mean enhanced LSD; positive when enhancement helps.
    pub fn improvement_db(&self) -> Option<f64> {
        Some(self.mean_noisy_lsd()? - self.mean_lsd()?)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::from("index\tlsd_db\tl1\tseg_snr_db\n");
        for r in &self.rows {
            writeln!(s, "{}\t{:.4}\t{:.4}\t{}", r.index, r.lsd_db, r.l1, opt(r.seg_snr_db)).unwrap();
        }
        writeln!(s, "# system\t{}", self.system).unwrap();
        writeln!(s, "# metric\tlog-spectral distance on log-Mel features (proxy; not a word error rate)").unwrap();
        writeln!(s, "# utterances\t{}", self.rows.len()).unwrap();
        writeln!(s, "# missing\t{}", self.missing.len()).unwrap();
        for m in &self.missing {
            writeln!(s, "# missing_file\t{m}").unwrap();
        }
        writeln!(s, "# mean_lsd_db\t{}", opt(self.mean_lsd())).unwrap();
        writeln!(s, "# mean_l1\t{}", opt(self.mean_l1())).unwrap();
        writeln!(s, "# mean_seg_snr_db\t{}", opt(self.mean_seg_snr())).unwrap();
        writeln!(s, "# noisy_lsd_db\t{}", opt(self.mean_noisy_lsd())).unwrap();
        writeln!(s, "# improvement_db\t{}", opt(self.improvement_db())).unwrap();
        s
    }
}

/// Scores one (noisy, clean) pair. With `g = None` the first noisy
/// microphone is the estimate.
pub fn evaluate_pair(
    g: Option<&ModelParams>,
    front: &FrontEnd,
    stats: &NormStats,
    noisy: &AudioClip,
    clean: &AudioClip,
) -> Result<(f64, f64, Option<f64>, f64)> {
    let (noisy_raw, clean_raw) = pair_features(front, noisy, clean)?;
    let clean_norm = normalize(&clean_raw, stats)?;
    let noisy_ref = noisy_raw.channel(0)?;
    let noisy_lsd = lsd(&noisy_ref, &clean_raw)?;
    let (est_raw, est_norm, snr) = match g.map(|g| (g, g.config())) {
        None => {
            let snr = seg_snr(clean.channel(0), noisy.channel(0), 512, 256).ok();
            (noisy_ref.clone(), normalize(&noisy_ref, stats)?, snr)
        }
        Some((g, ModelConfig::Fsegan(_))) => {
            let enhanced = enhance_features(g, &normalize(&noisy_raw, stats)?)?;
            (denormalize(&enhanced, stats)?, enhanced, None)
        }
        Some((g, ModelConfig::Segan(_))) => {
            let wave = enhance_waveform(g, noisy)?;
            let raw = front.features(&wave)?;
            let snr = seg_snr(clean.channel(0), wave.channel(0), 512, 256).ok();
            (raw.clone(), normalize(&raw, stats)?, snr)
        }
    };
    let l1 = est_norm
        .values()
        .iter()
        .zip(clean_norm.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / est_norm.values().len().max(1) as f64;
    Ok((lsd(&est_raw, &clean_raw)?, l1, snr, noisy_lsd))
}

/// Scores every pair of a waveform manifest in order. Unreadable files are
/// listed in the report and skipped.
pub fn evaluate_corpus(g: Option<&ModelParams>, manifest: &Manifest, front: &FrontEnd, stats: &NormStats) -> Result<MetricReport> {
    let mut report = MetricReport {
        system: g.map_or_else(|| "none".into(), |g| g.arch_tag()),
        ..Default::default()
    };
    for e in &manifest.entries {
        let (np, cp) = (manifest.resolve(&e.noisy), manifest.resolve(&e.clean));
        let mut clips = Vec::with_capacity(2);
        for p in [&np, &cp] {
            match load_wav(p) {
                Ok(c) => clips.push(c),
                Err(Error::Io { .. }) => report.missing.push(p.display().to_string()),
                Err(err) => return Err(err),
            }
        }
        if clips.len() < 2 {
            continue;
        }
        let (lsd_db, l1, seg_snr_db, noisy_lsd_db) = evaluate_pair(g, front, stats, &clips[0], &clips[1])?;
        report.rows.push(MetricRow {
            index: e.index,
            lsd_db,
            l1,
            seg_snr_db,
            noisy_lsd_db,
        });
    }
    Ok(report)
}
