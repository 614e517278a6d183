//! Fixed-width windowing of spectrograms and its inverse.

use super::features::LogMelSpectrogram;
use crate::error::{Error, Result};

/// Where a patch came from: first frame and number of real (unpadded) frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub start: usize,
    pub valid: usize,
}

/// Cuts `spec` into `width`-frame patches at stride `width·(1 − overlap_frac)`.
/// The tail not covered by a full window gets one extra patch, zero-padded on
/// the right; a spectrogram shorter than `width` yields a single padded patch.
pub fn frame_windows(
    spec: &LogMelSpectrogram,
    width: usize,
    overlap_frac: f64,
) -> Result<(Vec<LogMelSpectrogram>, Vec<Placement>)> {
    if width == 0 {
        return Err(Error::Config("window width must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(Error::Config(format!("overlap fraction {overlap_frac} outside [0, 1)")));
    }
    let stride = ((width as f64 * (1.0 - overlap_frac)).round() as usize).max(1);
    let n = spec.n_frames();
    let mut placement = Vec::new();
    let mut start = 0;
    while start + width <= n {
        placement.push(Placement { start, valid: width });
        start += stride;
    }
    let covered = placement.last().map_or(0, |p| p.start + width);
    if placement.is_empty() || covered < n {
        placement.push(Placement {
            start,
            valid: n - start,
        });
    }
    let patches = placement.iter().map(|p| padded_patch(spec, p, width)).collect::<Result<_>>()?;
    Ok((patches, placement))
}

fn padded_patch(spec: &LogMelSpectrogram, p: &Placement, width: usize) -> Result<LogMelSpectrogram> {
    let w = spec.n_bins() * spec.n_channels();
    let mut values = vec![0.0; width * w];
    values[..p.valid * w].copy_from_slice(&spec.values()[p.start * w..(p.start + p.valid) * w]);
    LogMelSpectrogram::new(width, spec.n_bins(), spec.n_channels(), values, spec.normalized, spec.frame_hop_s)
}

/// Concatenates the valid part of each patch. Only non-overlapping,
/// gap-free placements are accepted.
pub fn reassemble(
    patches: &[LogMelSpectrogram],
    placement: &[Placement],
    total_frames: usize,
) -> Result<LogMelSpectrogram> {
    let first = patches.first().ok_or_else(|| Error::Empty("no patches to reassemble".into()))?;
    if patches.len() != placement.len() {
        return Err(Error::Placement(format!(
            "{} patches but {} placements",
            patches.len(),
            placement.len()
        )));
    }
    let (nb, nc) = (first.n_bins(), first.n_channels());
    let w = nb * nc;
    let mut values = Vec::with_capacity(total_frames * w);
    let mut next = 0;
    for (patch, p) in patches.iter().zip(placement) {
        if p.start < next {
            return Err(Error::Placement(format!(
                "patch at frame {} overlaps the previous one ending at {next}",
                p.start
            )));
        }
        if p.start > next {
            return Err(Error::Placement(format!("gap between frame {next} and {}", p.start)));
        }
        if patch.n_bins() != nb || patch.n_channels() != nc {
            return Err(Error::Dimension("patches differ in bins or channels".into()));
        }
        if p.valid > patch.n_frames() {
            return Err(Error::Placement(format!(
                "valid length {} exceeds patch width {}",
                p.valid,
                patch.n_frames()
            )));
        }
        values.extend_from_slice(&patch.values()[..p.valid * w]);
        next += p.valid;
    }
    if next != total_frames {
        return Err(Error::Placement(format!("patches cover {next} frames, expected {total_frames}")));
    }
    LogMelSpectrogram::new(total_frames, nb, nc, values, first.normalized, first.frame_hop_s)
}
