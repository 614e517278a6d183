use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    PeriodicHann,
    Rectangular,
}

impl WindowFn {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::PeriodicHann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowFn::Rectangular => vec![1.0; len],
        }
    }
}

/// Short-time Fourier transform framing. Defaults are 32 ms windows with a
/// 10 ms hop at 16 kHz and no zero padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window_fn: WindowFn,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 160,
            fft_size: 512,
            window_fn: WindowFn::PeriodicHann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::Config(format!(
                "need 0 < hop ≤ window_len ≤ fft_size, got hop {} window {} fft {}",
                self.hop, self.window_len, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> Option<usize> {
        (len >= self.window_len).then(|| 1 + (len - self.window_len) / self.hop)
    }
}

/// Per-channel magnitude spectra, each `n_frames × n_bins` in frame-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitudes {
    pub n_frames: usize,
    pub n_bins: usize,
    pub channels: Vec<Vec<f64>>,
}

impl Magnitudes {
    pub fn frame(&self, channel: usize, t: usize) -> &[f64] {
        &self.channels[channel][t * self.n_bins..(t + 1) * self.n_bins]
    }
}

pub fn stft_magnitude(clip: &AudioClip, cfg: &StftConfig) -> Result<Magnitudes> {
    cfg.validate()?;
    let n_frames = cfg.n_frames(clip.len()).ok_or(Error::ClipTooShort {
        len: clip.len(),
        window: cfg.window_len,
    })?;
    let n_bins = cfg.n_bins();
    let window = cfg.window_fn.coefficients(cfg.window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut channels = Vec::with_capacity(clip.n_channels());
    for samples in clip.channels() {
        let mut out = Vec::with_capacity(n_frames * n_bins);
        for t in 0..n_frames {
            let start = t * cfg.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in window.iter().enumerate() {
                buf[i].re = samples[start + i] * w;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            out.extend(buf[..n_bins].iter().map(|c| c.norm()));
        }
        channels.push(out);
    }
    Ok(Magnitudes {
        n_frames,
        n_bins,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_rule() {
        let cfg = StftConfig::default();
        let clip = AudioClip::mono(vec![0.0; 16000], 16000).unwrap();
        let m = stft_magnitude(&clip, &cfg).unwrap();
        assert_eq!(m.n_frames, 97);
        assert_eq!(m.n_bins, 257);
        assert!(m.channels[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::mono(vec![0.0; 511], 16000).unwrap();
        assert!(matches!(
            stft_magnitude(&clip, &StftConfig::default()),
            Err(Error::ClipTooShort { len: 511, window: 512 })
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = StftConfig {
            hop: 600,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn periodic_hann_endpoints() {
        let w = WindowFn::PeriodicHann.coefficients(512);
        assert_eq!(w[0], 0.0);
        assert!((w[256] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[511]).abs() < 1e-15);
    }
}
