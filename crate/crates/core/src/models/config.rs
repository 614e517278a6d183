use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Spectral U-Net generator and patch discriminator dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FseganConfig {
    /// Stride-2 encoder layers (and as many decoder layers).
    pub depth: usize,
    pub base_channels: usize,
    pub channel_cap: usize,
    pub input_channels: usize,
    /// Patch extent in frames (time, first spatial axis).
    pub patch_frames: usize,
    /// Patch extent in Mel bins (frequency, second spatial axis).
    pub patch_bins: usize,
    pub disc_base_channels: usize,
}

impl Default for FseganConfig {
    fn default() -> Self {
        Self {
            depth: 7,
            base_channels: 64,
            channel_cap: 512,
            input_channels: 2,
            patch_frames: 128,
            patch_bins: 128,
            disc_base_channels: 64,
        }
    }
}

/// Number of stride-2 layers in the patch discriminator.
pub const FSEGAN_DISC_LAYERS: usize = 4;

impl FseganConfig {
    /// Depth 4, base 16, 16×16 patches: the configuration used by fast tests.
    pub fn miniature() -> Self {
        Self {
            depth: 4,
            base_channels: 16,
            channel_cap: 128,
            patch_frames: 16,
            patch_bins: 16,
            disc_base_channels: 16,
            ..Self::default()
        }
    }

    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| (self.base_channels << i).min(self.channel_cap))
            .collect()
    }

    pub fn disc_channels(&self) -> Vec<usize> {
        (0..FSEGAN_DISC_LAYERS)
            .map(|i| (self.disc_base_channels << i).min(self.channel_cap))
            .collect()
    }

    /// Per-example decisions emitted by the discriminator (one per time block).
    pub fn disc_outputs(&self) -> usize {
        self.patch_frames >> FSEGAN_DISC_LAYERS
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.depth) {
            return Err(Error::Config(format!("FSEGAN depth {} outside 1–7", self.depth)));
        }
        if self.base_channels == 0 || self.channel_cap == 0 || self.disc_base_channels == 0 || self.input_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        let unit = 1usize << self.depth.max(FSEGAN_DISC_LAYERS);
        for (name, side) in [("frames", self.patch_frames), ("bins", self.patch_bins)] {
            if side == 0 || side % unit != 0 {
                return Err(Error::Config(format!(
                    "patch {name} {side} must be a positive multiple of {unit} for depth {}",
                    self.depth
                )));
            }
        }
        Ok(())
    }
}

/// Waveform generator/discriminator dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeganConfig {
    pub filter_width: usize,
    pub input_channels: usize,
    /// Encoder channel schedule; its length is the depth.
    pub channels: Vec<usize>,
    pub window_samples: usize,
}

impl Default for SeganConfig {
    fn default() -> Self {
        Self {
            filter_width: 31,
            input_channels: 2,
            channels: vec![16, 32, 32, 64, 64, 128, 128, 256, 256, 512, 1024],
            window_samples: 20480,
        }
    }
}

impl SeganConfig {
    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn miniature() -> Self {
        Self {
            filter_width: 31,
            input_channels: 2,
            channels: vec![4, 8, 8, 16],
            window_samples: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config("SEGAN channel schedule must be nonempty and positive".into()));
        }
        if self.filter_width == 0 || self.input_channels == 0 {
            return Err(Error::Config("filter width and input channels must be positive".into()));
        }
        let unit = 1usize << self.depth();
        if self.window_samples == 0 || self.window_samples % unit != 0 {
            return Err(Error::Config(format!(
                "window of {} samples is not a multiple of 2^{}",
                self.window_samples,
                self.depth()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Fsegan,
    Segan,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Fsegan => "fsegan",
            ModelKind::Segan => "segan",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fsegan" => Ok(ModelKind::Fsegan),
            "segan" => Ok(ModelKind::Segan),
            o => Err(Error::Config(format!("unknown model {o:?} (fsegan|segan)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelConfig {
    Fsegan(FseganConfig),
    Segan(SeganConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Fsegan(_) => ModelKind::Fsegan,
            ModelConfig::Segan(_) => ModelKind::Segan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Fsegan(c) => c.validate(),
            ModelConfig::Segan(c) => c.validate(),
        }
    }

    /// Generator input/target example shapes (no batch axis).
    pub fn example_shapes(&self) -> (Vec<usize>, Vec<usize>) {
        match self {
            ModelConfig::Fsegan(c) => (
                vec![c.patch_frames, c.patch_bins, c.input_channels],
                vec![c.patch_frames, c.patch_bins, 1],
            ),
            ModelConfig::Segan(c) => (vec![c.window_samples, c.input_channels], vec![c.window_samples, 1]),
        }
    }

    /// `key=value` lines, stable order.
    pub fn to_text(&self) -> String {
        let mut s = format!("model={}\n", self.kind());
        match self {
            ModelConfig::Fsegan(c) => {
                for (k, v) in [
                    ("depth", c.depth),
                    ("base_channels", c.base_channels),
                    ("channel_cap", c.channel_cap),
                    ("input_channels", c.input_channels),
                    ("patch_frames", c.patch_frames),
                    ("patch_bins", c.patch_bins),
                    ("disc_base_channels", c.disc_base_channels),
                ] {
                    s.push_str(&format!("{k}={v}\n"));
                }
            }
            ModelConfig::Segan(c) => {
                let ch: Vec<String> = c.channels.iter().map(|v| v.to_string()).collect();
                s.push_str(&format!("filter_width={}\n", c.filter_width));
                s.push_str(&format!("input_channels={}\n", c.input_channels));
                s.push_str(&format!("channels={}\n", ch.join(",")));
                s.push_str(&format!("window_samples={}\n", c.window_samples));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("model config line {line:?} lacks '='")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| kv.remove(k).ok_or_else(|| Error::Config(format!("model config lacks {k}")));
        let num = |v: String, k: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("model config {k}={v:?} is not a count")))
        };
        let cfg = match take("model")?.parse::<ModelKind>()? {
            ModelKind::Fsegan => ModelConfig::Fsegan(FseganConfig {
                depth: num(take("depth")?, "depth")?,
                base_channels: num(take("base_channels")?, "base_channels")?,
                channel_cap: num(take("channel_cap")?, "channel_cap")?,
                input_channels: num(take("input_channels")?, "input_channels")?,
                patch_frames: num(take("patch_frames")?, "patch_frames")?,
                patch_bins: num(take("patch_bins")?, "patch_bins")?,
                disc_base_channels: num(take("disc_base_channels")?, "disc_base_channels")?,
            }),
            ModelKind::Segan => ModelConfig::Segan(SeganConfig {
                filter_width: num(take("filter_width")?, "filter_width")?,
                input_channels: num(take("input_channels")?, "input_channels")?,
                channels: take("channels")?
                    .split(',')
                    .map(|v| num(v.trim().to_string(), "channels"))
                    .collect::<Result<_>>()?,
                window_samples: num(take("window_samples")?, "window_samples")?,
            }),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown model config key {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let c = FseganConfig::default();
        assert_eq!(c.encoder_channels(), [64, 128, 256, 512, 512, 512, 512]);
        assert_eq!(c.disc_channels(), [64, 128, 256, 512]);
        assert_eq!(c.disc_outputs(), 8);
        assert_eq!(SeganConfig::default().depth(), 11);
        c.validate().unwrap();
        SeganConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let c = FseganConfig {
            patch_frames: 100,
            ..FseganConfig::default()
        };
        assert!(c.validate().is_err());
        let s = SeganConfig {
            window_samples: 1000,
            ..SeganConfig::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        for c in [
            ModelConfig::Fsegan(FseganConfig::miniature()),
            ModelConfig::Segan(SeganConfig::default()),
        ] {
            assert_eq!(ModelConfig::parse(&c.to_text()).unwrap(), c);
        }
        assert!(ModelConfig::parse("model=fsegan\ndepth=4\n").is_err());
        let extra = format!("{}bogus=1\n", ModelConfig::Fsegan(FseganConfig::miniature()).to_text());
        assert!(ModelConfig::parse(&extra).is_err());
    }
}
