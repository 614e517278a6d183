use rand::Rng;

use super::room::Split;
use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Discrete SNR distribution; test draws are shifted by `test_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSampler {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    pub test_offset: f64,
}

impl Default for SnrSampler {
    /// 0–30 dB in 5 dB steps, weighted towards low SNR (mean 11.25 dB).
    fn default() -> Self {
        Self {
            support: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            weights: vec![0.2, 0.2, 0.2, 0.15, 0.1, 0.1, 0.05],
            test_offset: 0.2,
        }
    }
}

impl SnrSampler {
    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.weights.len() {
            return Err(Error::Config("SNR support and weights must be nonempty and equal length".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("SNR weights must be nonnegative and sum to 1".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(s, w)| s * w).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, split: Split, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut value = *self.support.last().expect("validated sampler");
        for (s, w) in self.support.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                value = *s;
                break;
            }
        }
        match split {
            Split::Train => value,
            Split::Test => value + self.test_offset,
        }
    }
}

/// Noise gain that places `noise` `snr_db` below `speech` (pooled RMS).
pub fn snr_gain(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<f64> {
    let (ps, pn) = (speech.rms(), noise.rms());
    if ps == 0.0 {
        return Err(Error::Silent("speech".into()));
    }
    if pn == 0.0 {
        return Err(Error::Silent("noise".into()));
    }
    Ok(ps / pn * 10f64.powf(-snr_db / 20.0))
}

/// `speech + g·noise` with `g` from [`snr_gain`].
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    if speech.len() != noise.len() || speech.n_channels() != noise.n_channels() {
        return Err(Error::Dimension(format!(
            "speech {}×{} vs noise {}×{}",
            speech.n_channels(),
            speech.len(),
            noise.n_channels(),
            noise.len()
        )));
    }
    let g = snr_gain(speech, noise, snr_db)?;
    let channels = speech
        .channels()
        .iter()
        .zip(noise.channels())
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + g * b).collect())
        .collect();
    AudioClip::new(channels, speech.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_mean_and_offset() {
        let s = SnrSampler::default();
        s.validate().unwrap();
        assert!((s.mean() - 11.25).abs() < 1e-12);
        let only_zero = SnrSampler {
            support: vec![0.0],
            weights: vec![1.0],
            ..SnrSampler::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(only_zero.sample(Split::Test, &mut rng), 0.2);
        assert_eq!(only_zero.sample(Split::Train, &mut rng), 0.0);
    }

    #[test]
    fn gain_rules() {
        let a = AudioClip::new(vec![vec![0.3, -0.3], vec![0.3, -0.3]], 16000).unwrap();
        assert!((snr_gain(&a, &a, 20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((snr_gain(&a, &a, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let z = AudioClip::new(vec![vec![0.0; 2], vec![0.0; 2]], 16000).unwrap();
        assert!(matches!(mix_at_snr(&a, &z, 5.0), Err(Error::Silent(_))));
    }
}
