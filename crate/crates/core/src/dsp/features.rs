//! Log-Mel spectrograms, per-bin normalization and their file formats.

use std::path::Path;

use super::audio::AudioClip;
use super::mel::{build_mel_filterbank, MelConfig, MelFilterBank};
use super::stft::{stft_magnitude, Magnitudes, StftConfig};
use crate::error::{Error, Result};
use crate::fsio::{self, Reader};

pub const LOG_FLOOR: f64 = 1e-8;
pub const STD_FLOOR: f64 = 1e-5;

const FEATURE_MAGIC: &[u8; 4] = b"LMFB";
const FEATURE_VERSION: u32 = 1;
const STATS_MAGIC: &[u8; 4] = b"NSTA";

/// `n_frames × n_bins × n_channels` grid stored frame-major, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    n_frames: usize,
    n_bins: usize,
    n_channels: usize,
    values: Vec<f64>,
    pub normalized: bool,
    pub frame_hop_s: f64,
}

impl LogMelSpectrogram {
    pub fn new(
        n_frames: usize,
        n_bins: usize,
        n_channels: usize,
        values: Vec<f64>,
        normalized: bool,
        frame_hop_s: f64,
    ) -> Result<Self> {
        if !(1..=3).contains(&n_channels) {
            return Err(Error::Dimension(format!("{n_channels} channels (need 1–3)")));
        }
        if n_bins == 0 {
            return Err(Error::Dimension("zero Mel bins".into()));
        }
        if values.len() != n_frames * n_bins * n_channels {
            return Err(Error::Dimension(format!(
                "{} values for {n_frames}×{n_bins}×{n_channels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite spectrogram value".into()));
        }
        Ok(Self {
            n_frames,
            n_bins,
            n_channels,
            values,
            normalized,
            frame_hop_s,
        })
    }

    pub fn zeros(n_frames: usize, n_bins: usize, n_channels: usize, normalized: bool, frame_hop_s: f64) -> Result<Self> {
        Self::new(
            n_frames,
            n_bins,
            n_channels,
            vec![0.0; n_frames * n_bins * n_channels],
            normalized,
            frame_hop_s,
        )
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn index(&self, t: usize, b: usize, c: usize) -> usize {
        (t * self.n_bins + b) * self.n_channels + c
    }

    pub fn get(&self, t: usize, b: usize, c: usize) -> f64 {
        self.values[self.index(t, b, c)]
    }

    pub fn set(&mut self, t: usize, b: usize, c: usize, v: f64) {
        let i = self.index(t, b, c);
        self.values[i] = v;
    }

    /// Frame-major slice `[bin][channel]` for frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.n_bins * self.n_channels;
        &self.values[t * w..(t + 1) * w]
    }

    pub fn channel(&self, c: usize) -> Result<LogMelSpectrogram> {
        self.select_channels(&[c])
    }

    pub fn select_channels(&self, chans: &[usize]) -> Result<LogMelSpectrogram> {
        if let Some(&c) = chans.iter().find(|&&c| c >= self.n_channels) {
            return Err(Error::Dimension(format!("channel {c} of {}", self.n_channels)));
        }
        let mut values = Vec::with_capacity(self.n_frames * self.n_bins * chans.len());
        for cell in self.values.chunks_exact(self.n_channels) {
            values.extend(chans.iter().map(|&c| cell[c]));
        }
        LogMelSpectrogram::new(self.n_frames, self.n_bins, chans.len(), values, self.normalized, self.frame_hop_s)
    }

    /// Channel-axis concatenation, `self` first.
    pub fn stack(&self, other: &LogMelSpectrogram) -> Result<LogMelSpectrogram> {
        if self.n_frames != other.n_frames || self.n_bins != other.n_bins {
            return Err(Error::Dimension(format!(
                "cannot stack {}×{} with {}×{}",
                self.n_frames, self.n_bins, other.n_frames, other.n_bins
            )));
        }
        if self.normalized != other.normalized {
            return Err(Error::NormState("cannot stack normalized with unnormalized features".into()));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for (a, b) in self
            .values
            .chunks_exact(self.n_channels)
            .zip(other.values.chunks_exact(other.n_channels))
        {
            values.extend_from_slice(a);
            values.extend_from_slice(b);
        }
        LogMelSpectrogram::new(
            self.n_frames,
            self.n_bins,
            self.n_channels + other.n_channels,
            values,
            self.normalized,
            self.frame_hop_s,
        )
    }

    /// Frames `start..start+len` (must be in range).
    pub fn slice_frames(&self, start: usize, len: usize) -> LogMelSpectrogram {
        let w = self.n_bins * self.n_channels;
        LogMelSpectrogram {
            n_frames: len,
            values: self.values[start * w..(start + len) * w].to_vec(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> LogMelSpectrogram {
        LogMelSpectrogram {
            n_frames: 0,
            n_bins: self.n_bins,
            n_channels: self.n_channels,
            values: Vec::new(),
            normalized: self.normalized,
            frame_hop_s: self.frame_hop_s,
        }
    }
}

/// `ln(max(fb · frame, floor))` for every frame and channel.
pub fn log_mel(mag: &Magnitudes, fb: &MelFilterBank, floor: f64, frame_hop_s: f64) -> Result<LogMelSpectrogram> {
    if mag.n_bins != fb.n_bins {
        return Err(Error::Dimension(format!(
            "magnitude has {} bins, filterbank expects {}",
            mag.n_bins, fb.n_bins
        )));
    }
    let nc = mag.channels.len();
    let nf = fb.n_filters;
    let mut values = vec![0.0; mag.n_frames * nf * nc];
    let mut energies = vec![0.0; nf];
    for c in 0..nc {
        for t in 0..mag.n_frames {
            fb.apply(mag.frame(c, t), &mut energies);
            for (b, e) in energies.iter().enumerate() {
                values[(t * nf + b) * nc + c] = e.max(floor).ln();
            }
        }
    }
    LogMelSpectrogram::new(mag.n_frames, nf, nc, values, false, frame_hop_s)
}

/// STFT, Mel filterbank and log floor bundled together.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub stft: StftConfig,
    pub filterbank: MelFilterBank,
    pub floor: f64,
    pub sample_rate: u32,
}

impl FrontEnd {
    pub fn new(stft: StftConfig, n_mel: usize, sample_rate: u32) -> Result<Self> {
        stft.validate()?;
        let filterbank = build_mel_filterbank(&MelConfig {
            n_filters: n_mel,
            sample_rate,
            fft_size: stft.fft_size,
            ..MelConfig::default()
        })?;
        Ok(Self {
            stft,
            filterbank,
            floor: LOG_FLOOR,
            sample_rate,
        })
    }

    /// 32 ms / 10 ms framing with 128 Mel bins at 16 kHz.
    pub fn standard() -> Self {
        Self::new(StftConfig::default(), 128, 16_000).expect("default front end is valid")
    }

    pub fn n_bins(&self) -> usize {
        self.filterbank.n_filters
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.stft.hop as f64 / self.sample_rate as f64
    }

    pub fn features(&self, clip: &AudioClip) -> Result<LogMelSpectrogram> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::InvalidAudio(format!(
                "clip is {} Hz, front end expects {} Hz",
                clip.sample_rate(),
                self.sample_rate
            )));
        }
        let mag = stft_magnitude(clip, &self.stft)?;
        log_mel(&mag, &self.filterbank, self.floor, self.frame_hop_s())
    }
}

/// Per-bin mean and standard deviation, shared by every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }

    /// Values as they survive a trip through the f32 stats file.
    pub fn rounded_to_f32(&self) -> NormStats {
        let r = |v: &Vec<f64>| v.iter().map(|x| *x as f32 as f64).collect();
        NormStats {
            mean: r(&self.mean),
            std: r(&self.std),
        }
    }
}

/// Pooled population statistics over all frames and channels of the corpus.
pub fn fit_norm_stats<'a, I>(corpus: I) -> Result<NormStats>
where
    I: IntoIterator<Item = &'a LogMelSpectrogram>,
{
    let specs: Vec<&LogMelSpectrogram> = corpus.into_iter().collect();
    let first = specs.first().ok_or(Error::Empty("normalization corpus".into()))?;
    let n_bins = first.n_bins;
    let mut count = 0usize;
    let mut sum = vec![0.0; n_bins];
    for s in &specs {
        if s.n_bins != n_bins {
            return Err(Error::Dimension(format!("corpus mixes {} and {} bins", n_bins, s.n_bins)));
        }
        if s.normalized {
            return Err(Error::NormState("statistics must be fit on unnormalized features".into()));
        }
        for cell in s.values.chunks_exact(s.n_channels * n_bins) {
            for (b, acc) in sum.iter_mut().enumerate() {
                *acc += cell[b * s.n_channels..(b + 1) * s.n_channels].iter().sum::<f64>();
            }
        }
        count += s.n_frames * s.n_channels;
    }
    if count == 0 {
        return Err(Error::Empty("normalization corpus frames".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; n_bins];
    for s in &specs {
        for cell in s.values.chunks_exact(s.n_channels * n_bins) {
            for (b, acc) in sq.iter_mut().enumerate() {
                for v in &cell[b * s.n_channels..(b + 1) * s.n_channels] {
                    let d = v - mean[b];
                    *acc += d * d;
                }
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt().max(STD_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

fn check_stats(spec: &LogMelSpectrogram, stats: &NormStats) -> Result<()> {
    if stats.n_bins() != spec.n_bins || stats.std.len() != spec.n_bins {
        return Err(Error::Dimension(format!(
            "stats have {} bins, spectrogram {}",
            stats.n_bins(),
            spec.n_bins
        )));
    }
    if stats.std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::NormState("stats contain a non-positive std".into()));
    }
    Ok(())
}

pub fn normalize(spec: &LogMelSpectrogram, stats: &NormStats) -> Result<LogMelSpectrogram> {
    if spec.normalized {
        return Err(Error::NormState("spectrogram is already normalized".into()));
    }
    check_stats(spec, stats)?;
    let mut out = spec.clone();
    let nc = spec.n_channels;
    for (i, v) in out.values.iter_mut().enumerate() {
        let b = (i / nc) % spec.n_bins;
        *v = (*v - stats.mean[b]) / stats.std[b];
    }
    out.normalized = true;
    Ok(out)
}

pub fn denormalize(spec: &LogMelSpectrogram, stats: &NormStats) -> Result<LogMelSpectrogram> {
    if !spec.normalized {
        return Err(Error::NormState("spectrogram is not normalized".into()));
    }
    check_stats(spec, stats)?;
    let mut out = spec.clone();
    let nc = spec.n_channels;
    for (i, v) in out.values.iter_mut().enumerate() {
        let b = (i / nc) % spec.n_bins;
        *v = *v * stats.std[b] + stats.mean[b];
    }
    out.normalized = false;
    Ok(out)
}

pub fn encode_features(spec: &LogMelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + 4 * spec.values.len());
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [FEATURE_VERSION, spec.n_frames as u32, spec.n_bins as u32, spec.n_channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(spec.normalized as u8);
    for v in &spec.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Decodes an LMFB buffer; the hop is not stored and defaults to 10 ms.
pub fn decode_features(bytes: &[u8]) -> Result<LogMelSpectrogram> {
    let mut r = Reader::new(bytes, "feature file");
    if r.take(4)? != FEATURE_MAGIC {
        return Err(Error::Format("feature file: bad magic (expected LMFB)".into()));
    }
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("feature file: unsupported version {version}")));
    }
    let (nf, nb, nc) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let normalized = match r.u8()? {
        0 => false,
        1 => true,
        x => return Err(Error::Format(format!("feature file: bad normalized flag {x}"))),
    };
    let n = nf
        .checked_mul(nb)
        .and_then(|x| x.checked_mul(nc))
        .ok_or_else(|| Error::Format("feature file: size overflow".into()))?;
    let values = r.f32s(n)?.into_iter().map(f64::from).collect();
    if !r.is_done() {
        return Err(Error::Format("feature file: trailing bytes".into()));
    }
    LogMelSpectrogram::new(nf, nb, nc, values, normalized, 0.01)
}

pub fn save_features(spec: &LogMelSpectrogram, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_features(spec))
}

pub fn load_features(path: &Path) -> Result<LogMelSpectrogram> {
    decode_features(&fsio::read(path)?)
}

pub fn encode_stats(stats: &NormStats) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * stats.n_bins());
    out.extend_from_slice(STATS_MAGIC);
    out.extend_from_slice(&(stats.n_bins() as u32).to_le_bytes());
    for v in stats.mean.iter().chain(&stats.std) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_stats(bytes: &[u8]) -> Result<NormStats> {
    let mut r = Reader::new(bytes, "stats file");
    if r.take(4)? != STATS_MAGIC {
        return Err(Error::Format("stats file: bad magic (expected NSTA)".into()));
    }
    let n = r.u32()? as usize;
    let mean = r.f32s(n)?.into_iter().map(f64::from).collect();
    let std: Vec<f64> = r.f32s(n)?.into_iter().map(f64::from).collect();
    if !r.is_done() {
        return Err(Error::Format("stats file: trailing bytes".into()));
    }
    if std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Format("stats file: non-positive std".into()));
    }
    Ok(NormStats { mean, std })
}

pub fn save_stats(stats: &NormStats, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_stats(stats))
}

pub fn load_stats(path: &Path) -> Result<NormStats> {
    decode_stats(&fsio::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nf: usize, nb: usize, nc: usize, f: impl Fn(usize) -> f64) -> LogMelSpectrogram {
        LogMelSpectrogram::new(nf, nb, nc, (0..nf * nb * nc).map(f).collect(), false, 0.01).unwrap()
    }

    #[test]
    fn floor_path() {
        let fb = build_mel_filterbank(&MelConfig::default()).unwrap();
        let mag = Magnitudes {
            n_frames: 3,
            n_bins: 257,
            channels: vec![vec![0.0; 3 * 257]],
        };
        let s = log_mel(&mag, &fb, LOG_FLOOR, 0.01).unwrap();
        assert!(s.values().iter().all(|v| (*v - 1e-8f64.ln()).abs() < 1e-12));
        assert!((s.get(0, 0, 0) + 18.420_680_743_952_367).abs() < 1e-9);
    }

    #[test]
    fn flat_magnitude_gives_log_row_sum() {
        let fb = build_mel_filterbank(&MelConfig::default()).unwrap();
        let m = 0.37;
        let mag = Magnitudes {
            n_frames: 1,
            n_bins: 257,
            channels: vec![vec![m; 257]],
        };
        let s = log_mel(&mag, &fb, LOG_FLOOR, 0.01).unwrap();
        for b in 0..128 {
            let row_sum: f64 = fb.row(b).iter().sum();
            assert!((s.get(0, b, 0) - (row_sum * m).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_mel_dimension_mismatch() {
        let fb = build_mel_filterbank(&MelConfig::with_filters(32)).unwrap();
        let mag = Magnitudes {
            n_frames: 1,
            n_bins: 129,
            channels: vec![vec![1.0; 129]],
        };
        assert!(matches!(log_mel(&mag, &fb, LOG_FLOOR, 0.01), Err(Error::Dimension(_))));
    }

    #[test]
    fn stats_trivial_cases() {
        let c = spec(10, 4, 2, |_| 3.5);
        let st = fit_norm_stats([&c]).unwrap();
        assert!(st.mean.iter().all(|m| (*m - 3.5).abs() < 1e-12));
        assert!(st.std.iter().all(|s| *s == STD_FLOOR));

        let two = LogMelSpectrogram::new(2, 1, 1, vec![0.0, 2.0], false, 0.01).unwrap();
        let st = fit_norm_stats([&two]).unwrap();
        assert_eq!((st.mean[0], st.std[0]), (1.0, 1.0));

        assert!(matches!(fit_norm_stats(std::iter::empty()), Err(Error::Empty(_))));
    }

    #[test]
    fn normalize_maps_mean_and_std() {
        let st = NormStats {
            mean: vec![1.0, -2.0],
            std: vec![2.0, 0.5],
        };
        let s = LogMelSpectrogram::new(1, 2, 1, vec![1.0, -1.5], false, 0.01).unwrap();
        let n = normalize(&s, &st).unwrap();
        assert_eq!(n.values(), &[0.0, 1.0]);
        assert!(n.normalized);
        assert!(matches!(normalize(&n, &st), Err(Error::NormState(_))));
        assert!(matches!(denormalize(&s, &st), Err(Error::NormState(_))));
        assert_eq!(denormalize(&n, &st).unwrap(), s);
    }

    #[test]
    fn stack_and_select() {
        let a = spec(3, 2, 2, |i| i as f64);
        let b = spec(3, 2, 1, |i| -(i as f64));
        let s = a.stack(&b).unwrap();
        assert_eq!(s.n_channels(), 3);
        assert_eq!(s.select_channels(&[0, 1]).unwrap(), a);
        assert_eq!(s.channel(2).unwrap(), b);
        assert!(a.stack(&spec(4, 2, 1, |_| 0.0)).is_err());
    }

    #[test]
    fn file_round_trips() {
        let s = spec(5, 3, 2, |i| i as f64 * 0.25 - 1.0);
        assert_eq!(decode_features(&encode_features(&s)).unwrap(), s);
        let bytes = encode_features(&s);
        assert_eq!(&bytes[..4], b"LMFB");
        assert_eq!(bytes.len(), 21 + 4 * 30);
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());

        let st = NormStats {
            mean: vec![0.5, 1.25],
            std: vec![1.0, 2.0],
        };
        assert_eq!(decode_stats(&encode_stats(&st)).unwrap(), st);
    }

    #[test]
    fn invalid_spectrograms_rejected() {
        assert!(LogMelSpectrogram::new(1, 1, 4, vec![0.0; 4], false, 0.01).is_err());
        assert!(LogMelSpectrogram::new(1, 1, 1, vec![f64::NAN], false, 0.01).is_err());
        assert!(LogMelSpectrogram::new(2, 1, 1, vec![0.0], false, 0.01).is_err());
    }
}
