//! Deterministic speech-like test signals: a pitch-modulated harmonic source
//! shaped by time-varying formant resonators, organised into syllables and
//! pauses.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

const FS: f64 = DEFAULT_SAMPLE_RATE as f64;
/// Formant and envelope parameters are refreshed this often (5 ms).
const CONTROL_HOP: usize = 80;
const PEAK: f64 = 0.5;
/// Level of the stationary background (microphone and room noise) relative
/// to the utterance peak. Without it pauses are digital silence and their
/// log features sit on the numeric floor, far below anything a real
/// recording produces.
pub const NOISE_FLOOR_DB: f64 = -60.0;

/// Second-order resonator, `y[n] = g·x[n] + a1·y[n-1] + a2·y[n-2]`.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
    a1: f64,
    a2: f64,
    gain: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bandwidth: f64) {
        let r = (-PI * bandwidth / FS).exp();
        self.a1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        self.a2 = -r * r;
        // unity gain at the centre frequency (approximately)
        self.gain = 1.0 - r;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Vowel-like formant targets (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];

struct Syllable {
    start: usize,
    len: usize,
    from: [f64; 3],
    to: [f64; 3],
}

fn plan_syllables(rng: &mut ChaCha8Rng, n: usize) -> Vec<Syllable> {
    let mut out = Vec::new();
    // brief leading silence
    let mut pos = (rng.random_range(0.03..0.15) * FS) as usize;
    while pos < n {
        let words = rng.random_range(1..=4);
        for _ in 0..words {
            let len = (rng.random_range(0.12..0.30) * FS) as usize;
            if pos + len > n {
                return out;
            }
            out.push(Syllable {
                start: pos,
                len,
                from: VOWELS[rng.random_range(0..VOWELS.len())],
                to: VOWELS[rng.random_range(0..VOWELS.len())],
            });
            pos += len + (rng.random_range(0.0..0.04) * FS) as usize;
        }
        pos += (rng.random_range(0.05..0.40) * FS) as usize;
    }
    out
}

/// Mono clip of `duration_s` seconds, peak-normalized to 0.5.
pub fn synth_clean_utterance(seed: u64, duration_s: f64) -> Result<AudioClip> {
    if !(1.0..=10.0).contains(&duration_s) {
        return Err(Error::Config(format!("utterance duration {duration_s} s outside [1, 10]")));
    }
    let n = (duration_s * FS).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_f0 = rng.random_range(95.0..230.0);
    let tilt = rng.random_range(0.9..1.4);
    let syllables = plan_syllables(&mut rng, n);

    let mut out = vec![0.0; n];
    let mut phase = 0.0f64;
    let mut formants: [Resonator; 3] = Default::default();
    let mut amps = [1.0f64; 64];
    for syl in &syllables {
        let f0_start = base_f0 * rng.random_range(0.85..1.15);
        let f0_end = base_f0 * rng.random_range(0.8..1.1);
        let level = rng.random_range(0.5..1.0);
        for block in (0..syl.len).step_by(CONTROL_HOP) {
            let u = block as f64 / syl.len as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            let n_harm = ((3800.0 / f0) as usize).min(amps.len());
            for (k, a) in amps.iter_mut().enumerate().take(n_harm) {
                *a = ((k + 1) as f64).powf(-tilt);
            }
            for (i, r) in formants.iter_mut().enumerate() {
                let f = syl.from[i] + (syl.to[i] - syl.from[i]) * u;
                r.tune(f, BANDWIDTHS[i]);
            }
            let end = (block + CONTROL_HOP).min(syl.len);
            for j in block..end {
                let t = j as f64 / syl.len as f64;
                // raised-cosine syllable envelope
                let env = level * (0.5 - 0.5 * (2.0 * PI * t).cos());
                let f0_now = f0 * (1.0 + 0.01 * (2.0 * PI * 5.5 * j as f64 / FS).sin());
                phase = (phase + 2.0 * PI * f0_now / FS) % (2.0 * PI);
                let src: f64 = amps[..n_harm]
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * phase).sin())
                    .sum();
                let shaped = formants[0].process(src) + 0.6 * formants[1].process(src) + 0.3 * formants[2].process(src);
                out[syl.start + j] = env * shaped;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // separate stream so the floor does not disturb the syllable draws
    let mut floor_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf1002);
    let floor = peak.max(f64::MIN_POSITIVE) * 10f64.powf(NOISE_FLOOR_DB / 20.0);
    out.iter_mut()
        .for_each(|v| *v += floor * floor_rng.sample::<f64, _>(rand_distr::StandardNormal));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    AudioClip::mono(out, DEFAULT_SAMPLE_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = synth_clean_utterance(11, 2.0).unwrap();
        let b = synth_clean_utterance(11, 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32000);
        assert!((a.peak() - 0.5).abs() < 1e-12);
        assert_ne!(a, synth_clean_utterance(12, 2.0).unwrap());
    }

    #[test]
    fn duration_bounds() {
        assert!(synth_clean_utterance(0, 0.5).is_err());
        assert!(synth_clean_utterance(0, 10.5).is_err());
    }
}
