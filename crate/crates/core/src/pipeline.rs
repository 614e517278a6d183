//! Corpus-level feature extraction and the feature-pair manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dsp::{
    fit_norm_stats, load_features, load_wav, normalize, save_features, AudioClip, FrontEnd, LogMelSpectrogram,
    NormStats,
};
use crate::error::{Error, Result};
use crate::fsio;
use crate::synth::{Manifest, Split};

pub const FEATURE_MANIFEST_NAME: &str = "features.tsv";

/// Unnormalized log-Mel features of one pair: noisy keeps every microphone,
/// clean is mono.
pub fn pair_features(front: &FrontEnd, noisy: &AudioClip, clean: &AudioClip) -> Result<(LogMelSpectrogram, LogMelSpectrogram)> {
    if clean.n_channels() != 1 {
        return Err(Error::InvalidAudio(format!("clean reference has {} channels", clean.n_channels())));
    }
    if noisy.len() != clean.len() {
        return Err(Error::InvalidAudio(format!(
            "noisy has {} samples, clean {}",
            noisy.len(),
            clean.len()
        )));
    }
    Ok((front.features(noisy)?, front.features(clean)?))
}

/// Normalizes raw pairs, fitting statistics on the noisy side first when
/// `stats` is `None`. Fitted statistics are rounded to their stored precision
/// so features computed now equal features computed from the saved file.
pub fn normalize_pairs(
    raw: &[(LogMelSpectrogram, LogMelSpectrogram)],
    stats: Option<&NormStats>,
) -> Result<(Vec<(LogMelSpectrogram, LogMelSpectrogram)>, NormStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => fit_norm_stats(raw.iter().map(|(n, _)| n))?.rounded_to_f32(),
    };
    let pairs = raw
        .iter()
        .map(|(n, c)| Ok((normalize(n, &stats)?, normalize(c, &stats)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntry {
    pub index: u64,
    pub split: Split,
    pub noisy: PathBuf,
    pub clean: PathBuf,
}

/// Feature files written by [`featurize_corpus`], one pair per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureManifest {
    pub entries: Vec<FeatureEntry>,
    pub root: PathBuf,
}

impl FeatureManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            writeln!(s, "{}\t{}\t{}\t{}", e.index, e.split, e.noisy.display(), e.clean.display()).unwrap();
        }
        s
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("feature manifest line {}: {what}", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            entries.push(FeatureEntry {
                index: f[0].parse().map_err(|_| bad("bad index"))?,
                split: f[1].parse().map_err(|_| bad("bad split"))?,
                noisy: f[2].into(),
                clean: f[3].into(),
            });
        }
        Ok(Self {
            entries,
            root: root.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = String::from_utf8(fsio::read(path)?)
            .map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_text().as_bytes())
    }

    /// Every (noisy, clean) pair, in manifest order.
    pub fn load_pairs(&self) -> Result<Vec<(LogMelSpectrogram, LogMelSpectrogram)>> {
        self.entries
            .iter()
            .map(|e| Ok((load_features(&self.root.join(&e.noisy))?, load_features(&self.root.join(&e.clean))?)))
            .collect()
    }
}

/// Loads every pair of a waveform manifest.
pub fn load_manifest_audio(manifest: &Manifest) -> Result<Vec<(AudioClip, AudioClip)>> {
    manifest
        .entries
        .iter()
        .map(|e| Ok((load_wav(&manifest.resolve(&e.noisy))?, load_wav(&manifest.resolve(&e.clean))?)))
        .collect()
}

/// Featurizes a waveform corpus into `out_dir`: normalized noisy (all mics)
/// and clean (mono) LMFB files plus [`FEATURE_MANIFEST_NAME`]. Without
/// `stats` the statistics are fit on this corpus's noisy features, which is
/// only allowed for the training split.
pub fn featurize_corpus(
    manifest: &Manifest,
    front: &FrontEnd,
    stats: Option<&NormStats>,
    out_dir: &Path,
) -> Result<(FeatureManifest, NormStats)> {
    if manifest.entries.is_empty() {
        return Err(Error::Empty("manifest lists no utterances".into()));
    }
    if stats.is_none() && manifest.entries.iter().any(|e| e.split != Split::Train) {
        return Err(Error::Config(
            "normalization statistics for a test split must come from the training split; featurize train first and pass its stats".into(),
        ));
    }
    if let Some(s) = stats {
        if s.n_bins() != front.n_bins() {
            return Err(Error::Dimension(format!(
                "stats have {} bins, front end produces {}",
                s.n_bins(),
                front.n_bins()
            )));
        }
    }
    let raw = load_manifest_audio(manifest)?
        .iter()
        .map(|(n, c)| pair_features(front, n, c))
        .collect::<Result<Vec<_>>>()?;
    let (pairs, stats) = normalize_pairs(&raw, stats)?;
    fsio::create_dir_all(out_dir)?;
    let mut out = FeatureManifest {
        entries: Vec::with_capacity(pairs.len()),
        root: out_dir.to_path_buf(),
    };
    for (e, (noisy, clean)) in manifest.entries.iter().zip(&pairs) {
        let stem = format!("{}_{:05}", e.split, e.index);
        let entry = FeatureEntry {
            index: e.index,
            split: e.split,
            noisy: format!("{stem}_noisy.lmfb").into(),
            clean: format!("{stem}_clean.lmfb").into(),
        };
        save_features(noisy, &out_dir.join(&entry.noisy))?;
        save_features(clean, &out_dir.join(&entry.clean))?;
        out.entries.push(entry);
    }
    out.save(&out_dir.join(FEATURE_MANIFEST_NAME))?;
    Ok((out, stats))
}
