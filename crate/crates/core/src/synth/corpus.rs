//! Matched noisy/clean pairs, the corpus manifest and corpus generation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::NoiseBank;
use super::rir::{convolve_rir, rir_image_source, Rir, DEFAULT_MAX_ORDER, RIR_HIGHPASS_HZ};
use super::room::{sample_room, RoomConfig, Split};
use super::snr::{mix_at_snr, SnrSampler};
use super::speech::synth_clean_utterance;
use crate::dsp::{save_wav, AudioClip};
use crate::error::{Error, Result};
use crate::fsio;

pub const MANIFEST_NAME: &str = "manifest.tsv";

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of utterance `index`; the split is mixed in so train and test
/// corpora built from one master seed never share utterances.
pub fn utterance_seed(master_seed: u64, index: u64, split: Split) -> u64 {
    let tag = match split {
        Split::Train => 0x7472_6169_6e00_0000,
        Split::Test => 0x7465_7374_0000_0000,
    };
    splitmix64(splitmix64(master_seed ^ tag) ^ index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reverb {
    /// Image-source simulation up to the given reflection order.
    Simulated { max_order: u32 },
    /// Direct path only (the limit of total absorption).
    DirectOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub reverb: Reverb,
    pub snr: SnrSampler,
    /// Forces every pair to this SNR instead of sampling.
    pub fixed_snr_db: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 1.5,
            max_duration_s: 3.0,
            reverb: Reverb::Simulated {
                max_order: DEFAULT_MAX_ORDER,
            },
            snr: SnrSampler::default(),
            fixed_snr_db: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1.0 <= self.min_duration_s && self.min_duration_s <= self.max_duration_s && self.max_duration_s <= 10.0) {
            return Err(Error::Config(format!(
                "durations must satisfy 1 ≤ min ≤ max ≤ 10, got {} and {}",
                self.min_duration_s, self.max_duration_s
            )));
        }
        self.snr.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub noisy: AudioClip,
    pub clean: AudioClip,
    pub snr_db: f64,
    pub room_id: u64,
    pub seed: u64,
}

fn room_rir(room: &RoomConfig, source: &[f64; 3], reverb: Reverb) -> Result<Rir> {
    match reverb {
        Reverb::Simulated { max_order } => Ok(rir_image_source(room, source, max_order)?.high_passed(RIR_HIGHPASS_HZ)),
        Reverb::DirectOnly => {
            super::rir::rir_with_absorption(room.dims, source, [&room.mic_l, &room.mic_r], 1.0, 0)
        }
    }
}

fn scale_to_rms(clip: AudioClip, target_rms: f64) -> Result<AudioClip> {
    let rms = clip.rms();
    if rms == 0.0 {
        return Err(Error::Silent("reverberant speech".into()));
    }
    let g = target_rms / rms;
    let sr = clip.sample_rate();
    AudioClip::new(
        clip.into_channels()
            .into_iter()
            .map(|c| c.into_iter().map(|v| v * g).collect())
            .collect(),
        sr,
    )
}

/// Builds one matched pair. The clean target is the dry mono utterance; the
/// noisy input is reverberant speech (rescaled to the dry RMS) plus noise
/// played from a second position in the same room, clipped to `[-1, 1]`.
pub fn build_pair(
    master_seed: u64,
    index: u64,
    split: Split,
    noise_bank: &NoiseBank,
    cfg: &SynthConfig,
) -> Result<UtterancePair> {
    cfg.validate()?;
    let seed = utterance_seed(master_seed, index, split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = if cfg.max_duration_s > cfg.min_duration_s {
        rng.random_range(cfg.min_duration_s..cfg.max_duration_s)
    } else {
        cfg.min_duration_s
    };
    // whole 10 ms steps
    let duration = (duration * 100.0).round() / 100.0;
    let clean = synth_clean_utterance(rng.random(), duration)?;
    let room_seed: u64 = rng.random();
    let room = match split {
        Split::Train => sample_room(room_seed, split),
        Split::Test => sample_room(rng.random_range(0..super::room::TEST_CATALOG_SIZE as u64), split),
    };
    let snr_db = cfg.fixed_snr_db.unwrap_or_else(|| cfg.snr.sample(split, &mut rng));
    let noise = noise_bank.draw(clean.len(), &mut rng)?;

    let speech_rir = room_rir(&room, &room.speech_pos, cfg.reverb)?;
    let noise_rir = room_rir(&room, &room.noise_pos, cfg.reverb)?;
    let speech = scale_to_rms(convolve_rir(&clean, &speech_rir)?, clean.rms())?;
    let noise = convolve_rir(&noise, &noise_rir)?;
    let mixed = mix_at_snr(&speech, &noise, snr_db)?;
    let sr = mixed.sample_rate();
    let noisy = AudioClip::new(
        mixed
            .into_channels()
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
            .collect(),
        sr,
    )?;
    Ok(UtterancePair {
        noisy,
        clean,
        snr_db,
        room_id: room.room_id,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: u64,
    pub split: Split,
    pub seed: u64,
    pub snr_db: f64,
    pub room_id: u64,
    /// Relative to the manifest's directory unless absolute.
    pub noisy: PathBuf,
    pub clean: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.index,
                e.split,
                e.seed,
                e.snr_db,
                e.room_id,
                e.noisy.display(),
                e.clean.display()
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str, root: &Path) -> Result<Manifest> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("manifest line {}: {what}", lineno + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(&format!("expected 7 tab-separated fields, got {}", f.len())));
            }
            entries.push(ManifestEntry {
                index: f[0].parse().map_err(|_| bad("bad index"))?,
                split: f[1].parse().map_err(|_| bad("bad split"))?,
                seed: f[2].parse().map_err(|_| bad("bad seed"))?,
                snr_db: f[3].parse().map_err(|_| bad("bad snr"))?,
                room_id: f[4].parse().map_err(|_| bad("bad room id"))?,
                noisy: PathBuf::from(f[5]),
                clean: PathBuf::from(f[6]),
            });
        }
        Ok(Manifest {
            entries,
            root: root.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let bytes = fsio::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &root)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_text().as_bytes())
    }
}

/// Generates `count` pairs into `out_dir` (WAVs plus `manifest.tsv`).
pub fn write_corpus(
    out_dir: &Path,
    split: Split,
    count: u64,
    master_seed: u64,
    noise_bank: &NoiseBank,
    cfg: &SynthConfig,
) -> Result<Manifest> {
    fsio::create_dir_all(out_dir)?;
    let mut manifest = Manifest {
        entries: Vec::with_capacity(count as usize),
        root: out_dir.to_path_buf(),
    };
    for index in 0..count {
        let pair = build_pair(master_seed, index, split, noise_bank, cfg)?;
        let noisy = PathBuf::from(format!("{split}_{index:05}_noisy.wav"));
        let clean = PathBuf::from(format!("{split}_{index:05}_clean.wav"));
        save_wav(&pair.noisy, &out_dir.join(&noisy))?;
        save_wav(&pair.clean, &out_dir.join(&clean))?;
        manifest.entries.push(ManifestEntry {
            index,
            split,
            seed: pair.seed,
            snr_db: pair.snr_db,
            room_id: pair.room_id,
            noisy,
            clean,
        });
    }
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
