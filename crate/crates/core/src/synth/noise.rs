//! Noise textures mixed into the speech: synthetic sources plus optional
//! user-supplied recordings.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

const FS: f64 = DEFAULT_SAMPLE_RATE as f64;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Band-limited noise bursts (one-pole high-pass then low-pass).
    FilteredBursts { low_hz: f64, high_hz: f64 },
    /// Mains-style hum: a fundamental and decaying harmonics with slow drift.
    Hum { fundamental_hz: f64, harmonics: usize },
    /// Continuous noise with a 1/f-like spectrum.
    Pink,
    /// Looped excerpt of a mono recording.
    Recording(Vec<f64>),
}

impl NoiseSource {
    pub fn name(&self) -> String {
        match self {
            NoiseSource::FilteredBursts { low_hz, high_hz } => format!("bursts_{low_hz:.0}_{high_hz:.0}"),
            NoiseSource::Hum { fundamental_hz, .. } => format!("hum_{fundamental_hz:.0}"),
            NoiseSource::Pink => "pink".into(),
            NoiseSource::Recording(_) => "recording".into(),
        }
    }

    /// Renders `len` samples; the result is not level-normalized.
    pub fn render(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            NoiseSource::FilteredBursts { low_hz, high_hz } => bursts(len, *low_hz, *high_hz, rng),
            NoiseSource::Hum {
                fundamental_hz,
                harmonics,
            } => hum(len, *fundamental_hz, *harmonics, rng),
            NoiseSource::Pink => pink(len, rng),
            NoiseSource::Recording(samples) => {
                let offset = rng.random_range(0..samples.len());
                (0..len).map(|i| samples[(offset + i) % samples.len()]).collect()
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn one_pole_coeff(cutoff_hz: f64) -> f64 {
    (-2.0 * PI * cutoff_hz / FS).exp()
}

fn bursts(len: usize, low_hz: f64, high_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (a_hp, a_lp) = (one_pole_coeff(low_hz), one_pole_coeff(high_hz));
    let (mut hp_prev_in, mut hp_prev_out, mut lp) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    // on/off bursts with short fades; a low floor keeps the noise never silent
    let mut remaining = 0usize;
    let mut on = false;
    let mut env = 0.0f64;
    for _ in 0..len {
        if remaining == 0 {
            on = !on;
            remaining = (rng.random_range(if on { 0.1..0.6 } else { 0.05..0.3 }) * FS) as usize;
        }
        remaining -= 1;
        let target = if on { 1.0 } else { 0.15 };
        env += (target - env) * 0.002;
        let x = gaussian(rng);
        let hp = a_hp * (hp_prev_out + x - hp_prev_in);
        hp_prev_in = x;
        hp_prev_out = hp;
        lp = (1.0 - a_lp) * hp + a_lp * lp;
        out.push(env * lp);
    }
    out
}

fn hum(len: usize, f0: f64, harmonics: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let drift_rate = rng.random_range(0.1..0.5);
    (0..len)
        .map(|n| {
            let t = n as f64 / FS;
            let f = f0 * (1.0 + 0.002 * (2.0 * PI * drift_rate * t).sin());
            let tone: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, p)| ((k + 1) as f64).recip() * (2.0 * PI * f * (k + 1) as f64 * t + p).sin())
                .sum();
            tone + 0.02 * gaussian(rng)
        })
        .collect()
}

/// Paul Kellet's economy pink filter.
fn pink(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..len)
        .map(|_| {
            let w = gaussian(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    sources: Vec<NoiseSource>,
}

impl NoiseBank {
    pub fn new(sources: Vec<NoiseSource>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Empty("noise bank".into()));
        }
        if sources
            .iter()
            .any(|s| matches!(s, NoiseSource::Recording(v) if v.is_empty() || v.iter().all(|x| *x == 0.0)))
        {
            return Err(Error::Silent("noise recording is empty or silent".into()));
        }
        Ok(Self { sources })
    }

    /// The built-in synthetic textures.
    pub fn synthetic() -> Self {
        Self {
            sources: vec![
                NoiseSource::FilteredBursts {
                    low_hz: 200.0,
                    high_hz: 2500.0,
                },
                NoiseSource::FilteredBursts {
                    low_hz: 1000.0,
                    high_hz: 6000.0,
                },
                NoiseSource::Hum {
                    fundamental_hz: 60.0,
                    harmonics: 12,
                },
                NoiseSource::Hum {
                    fundamental_hz: 217.0,
                    harmonics: 6,
                },
                NoiseSource::Pink,
            ],
        }
    }

    /// Adds mono (first channel) recordings; sample rate must match.
    pub fn with_recordings(mut self, clips: &[AudioClip]) -> Result<Self> {
        for c in clips {
            if c.sample_rate() != DEFAULT_SAMPLE_RATE {
                return Err(Error::InvalidAudio(format!("noise clip at {} Hz", c.sample_rate())));
            }
            self.sources.push(NoiseSource::Recording(c.channel(0).to_vec()));
        }
        Self::new(self.sources)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[NoiseSource] {
        &self.sources
    }

    /// Picks a source uniformly and renders a mono clip.
    pub fn draw(&self, len: usize, rng: &mut ChaCha8Rng) -> Result<AudioClip> {
        let src = &self.sources[rng.random_range(0..self.sources.len())];
        AudioClip::mono(src.render(len, rng), DEFAULT_SAMPLE_RATE)
    }
}
