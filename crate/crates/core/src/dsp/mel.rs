//! Triangular Mel filterbank (HTK Mel scale).

use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_filters: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_filters: 128,
            f_min: 125.0,
            f_max: 7500.0,
            sample_rate: 16_000,
            fft_size: 512,
        }
    }
}

impl MelConfig {
    pub fn with_filters(n_filters: usize) -> Self {
        Self {
            n_filters,
            ..Self::default()
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// `n_filters × n_bins` nonnegative weights, rows ordered by center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    pub n_filters: usize,
    pub n_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Row-major weights.
    pub weights: Vec<f64>,
    /// The `n_filters + 2` band edges in Hz.
    pub breakpoints: Vec<f64>,
}

impl MelFilterBank {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_bins..(i + 1) * self.n_bins]
    }

    /// Applies the bank to one magnitude frame.
    pub fn apply(&self, frame: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(frame).map(|(w, m)| w * m).sum();
        }
    }
}

pub fn build_mel_filterbank(cfg: &MelConfig) -> Result<MelFilterBank> {
    let n_bins = cfg.n_bins();
    let nyquist = cfg.sample_rate as f64 / 2.0;
    if cfg.n_filters == 0 || cfg.n_filters + 2 > n_bins {
        return Err(Error::Config(format!(
            "{} filters (+2 edges) exceed {} FFT bins",
            cfg.n_filters, n_bins
        )));
    }
    if !(0.0 <= cfg.f_min && cfg.f_min < cfg.f_max && cfg.f_max <= nyquist) {
        return Err(Error::Config(format!(
            "need 0 ≤ f_min < f_max ≤ {nyquist}, got {} and {}",
            cfg.f_min, cfg.f_max
        )));
    }
    let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let n_edges = cfg.n_filters + 2;
    let breakpoints: Vec<f64> = (0..n_edges)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_edges - 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut weights = vec![0.0; cfg.n_filters * n_bins];
    for i in 0..cfg.n_filters {
        let (lo, center, hi) = (breakpoints[i], breakpoints[i + 1], breakpoints[i + 2]);
        let row = &mut weights[i * n_bins..(i + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let up = (f - lo) / (center - lo);
            let down = (hi - f) / (hi - center);
            *w = up.min(down).max(0.0);
        }
        // A band narrower than the bin spacing can miss every bin; such a row
        // gets a unit weight at the bin closest to its center.
        if row.iter().all(|w| *w == 0.0) {
            let k = (center / bin_hz).round() as usize;
            row[k.min(n_bins - 1)] = 1.0;
        }
    }
    Ok(MelFilterBank {
        n_filters: cfg.n_filters,
        n_bins,
        f_min: cfg.f_min,
        f_max: cfg.f_max,
        weights,
        breakpoints,
    })
}
