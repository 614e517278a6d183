//! Image-source room impulse responses, FFT convolution and Schroeder decay
//! analysis.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::room::{distance, Point, RoomConfig};
use crate::dsp::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_MAX_ORDER: u32 = 30;
/// Cut-off of the DC-blocking filter applied before an RIR is used.
pub const RIR_HIGHPASS_HZ: f64 = 100.0;

/// Two-channel impulse response sampled at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<Vec<f64>>,
    pub direct_delay: usize,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One-pole DC blocker `y[n] = x[n] − x[n−1] + r·y[n−1]` on each channel.
    ///
    /// Image amplitudes are all positive and many late images round onto the
    /// same tap, so the raw response carries a growing low-frequency
    /// offset that inflates late energy; removing it restores the decay.
    pub fn high_passed(&self, cutoff_hz: f64) -> Rir {
        let r = (-2.0 * PI * cutoff_hz / DEFAULT_SAMPLE_RATE as f64).exp();
        let taps = self
            .taps
            .iter()
            .map(|h| {
                let (mut px, mut py) = (0.0, 0.0);
                h.iter()
                    .map(|&x| {
                        let y = x - px + r * py;
                        px = x;
                        py = y;
                        y
                    })
                    .collect()
            })
            .collect();
        Rir {
            taps,
            direct_delay: self.direct_delay,
        }
    }

    /// A unit impulse at `delay` on both channels.
    pub fn impulse(delay: usize) -> Rir {
        let mut t = vec![0.0; delay + 1];
        t[delay] = 1.0;
        Rir {
            taps: vec![t.clone(), t],
            direct_delay: delay,
        }
    }
}

/// Position along one axis of lattice image `i` for coordinate `x` in a room
/// of extent `l`: even indices translate, odd indices mirror.
pub fn image_coordinate(i: i32, x: f64, l: f64) -> f64 {
    if i.rem_euclid(2) == 0 {
        i as f64 * l + x
    } else {
        (i + 1) as f64 * l - x
    }
}

/// Every image `(position, reflection order)` with `|i|+|j|+|k| ≤ max_order`.
pub fn image_sources(dims: [f64; 3], source: &Point, max_order: u32) -> Vec<(Point, u32)> {
    let n = max_order as i32;
    let mut out = Vec::new();
    for i in -n..=n {
        let ri = n - i.abs();
        for j in -ri..=ri {
            let rk = ri - j.abs();
            for k in -rk..=rk {
                let p = [
                    image_coordinate(i, source[0], dims[0]),
                    image_coordinate(j, source[1], dims[1]),
                    image_coordinate(k, source[2], dims[2]),
                ];
                out.push((p, (i.abs() + j.abs() + k.abs()) as u32));
            }
        }
    }
    out
}

/// Delay in samples and amplitude of one image as heard at `mic`.
fn image_tap(image: &Point, order: u32, mic: &Point, reflection: f64) -> (usize, f64) {
    let d = distance(image, mic).max(1e-3);
    let delay = (d / SPEED_OF_SOUND * DEFAULT_SAMPLE_RATE as f64).round() as usize;
    (delay, reflection.powi(order as i32) / (4.0 * PI * d))
}

/// Shoebox image-source response from `source` to the room's two mics.
/// Each wall reflection scales pressure by `sqrt(1 − α)`.
pub fn rir_image_source(room: &RoomConfig, source: &Point, max_order: u32) -> Result<Rir> {
    for (name, p) in [("source", source), ("left mic", &room.mic_l), ("right mic", &room.mic_r)] {
        if !room.contains(p) {
            return Err(Error::OutsideRoom(format!("{name} at {p:?} in room {:?}", room.dims)));
        }
    }
    let alpha = room.absorption()?;
    rir_with_absorption(room.dims, source, [&room.mic_l, &room.mic_r], alpha, max_order)
}

/// As [`rir_image_source`] with an explicit absorption coefficient (clamped
/// to `[0, 1]`).
pub fn rir_with_absorption(
    dims: [f64; 3],
    source: &Point,
    mics: [&Point; 2],
    alpha: f64,
    max_order: u32,
) -> Result<Rir> {
    let reflection = (1.0 - alpha.clamp(0.0, 1.0)).sqrt();
    let images = image_sources(dims, source, max_order);
    let mut taps = Vec::with_capacity(2);
    let mut direct_delay = usize::MAX;
    for mic in mics {
        let contributions: Vec<(usize, f64)> = images
            .iter()
            .map(|(p, order)| image_tap(p, *order, mic, reflection))
            .collect();
        let len = contributions.iter().map(|(d, _)| d + 1).max().unwrap_or(1);
        let mut h = vec![0.0; len];
        for (d, a) in contributions {
            h[d] += a;
        }
        let (direct, _) = image_tap(source, 0, mic, reflection);
        direct_delay = direct_delay.min(direct);
        taps.push(h);
    }
    let len = taps.iter().map(Vec::len).max().unwrap_or(1);
    taps.iter_mut().for_each(|t| t.resize(len, 0.0));
    Ok(Rir { taps, direct_delay })
}

/// Linear convolution via zero-padded FFT, trimmed to `signal.len()`.
pub fn fft_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return vec![0.0; signal.len()];
    }
    let full = signal.len() + kernel.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let load = |x: &[f64]| {
        let mut v = vec![Complex::new(0.0, 0.0); n];
        v.iter_mut().zip(x).for_each(|(c, r)| c.re = *r);
        v
    };
    let mut a = load(signal);
    let mut b = load(kernel);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    inv.process(&mut a);
    a[..signal.len()].iter().map(|c| c.re / n as f64).collect()
}

/// Mono clip through each RIR channel, giving a stereo clip of equal length.
pub fn convolve_rir(clip: &AudioClip, rir: &Rir) -> Result<AudioClip> {
    if clip.n_channels() != 1 {
        return Err(Error::InvalidAudio(format!(
            "convolve_rir expects mono input, got {} channels",
            clip.n_channels()
        )));
    }
    let x = clip.channel(0);
    let channels = rir.taps.iter().map(|h| fft_convolve(x, h)).collect();
    AudioClip::new(channels, clip.sample_rate())
}

/// Schroeder backward-integrated energy decay in dB relative to total energy.
pub fn energy_decay_curve(h: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (e, v) in edc.iter_mut().zip(h).rev() {
        acc += v * v;
        *e = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| 10.0 * (e / total).max(1e-300).log10()).collect()
}

/// T60 from a least-squares line through the −5 … −25 dB part of the decay
/// curve, extrapolated to 60 dB. `None` if the response never decays that far.
pub fn estimate_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let edc = energy_decay_curve(h);
    let start = edc.iter().position(|v| *v <= -5.0)?;
    let end = edc.iter().position(|v| *v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (start..=end).map(|i| (i as f64 / sample_rate as f64, edc[i])).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}
