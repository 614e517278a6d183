//! RIFF/WAVE PCM16 reader and writer.

use std::path::Path;

use super::audio::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::fsio;

const PCM: u16 = 1;

/// Reads a 16-bit PCM, 16 kHz, mono or stereo WAV file.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    decode_wav(&fsio::read(path)?)
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::MalformedWav(format!("chunk {:?} overruns file", String::from_utf8_lossy(id))))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedWav("fmt chunk too short".into()));
                }
                let le16 = |o: usize| u16::from_le_bytes([body[o], body[o + 1]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                fmt = Some((le16(0), le16(2), rate, le16(14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_end + (size & 1);
    }
    let (format, n_channels, rate, bits) = fmt.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    if format != PCM {
        return Err(Error::UnsupportedWav(format!("format tag {format} (only PCM)")));
    }
    if bits != 16 {
        return Err(Error::UnsupportedWav(format!("unsupported bit depth {bits}")));
    }
    if rate != DEFAULT_SAMPLE_RATE {
        return Err(Error::UnsupportedWav(format!("unsupported sample rate {rate}")));
    }
    if !(1..=2).contains(&n_channels) {
        return Err(Error::UnsupportedWav(format!("{n_channels} channels")));
    }
    let nc = n_channels as usize;
    let frame_bytes = 2 * nc;
    if data.len() % frame_bytes != 0 {
        return Err(Error::MalformedWav("data length is not a whole number of frames".into()));
    }
    let frames = data.len() / frame_bytes;
    let mut channels = vec![Vec::with_capacity(frames); nc];
    for frame in data.chunks_exact(frame_bytes) {
        for (c, ch) in channels.iter_mut().enumerate() {
            let v = i16::from_le_bytes([frame[2 * c], frame[2 * c + 1]]);
            ch.push(v as f64 / 32768.0);
        }
    }
    AudioClip::new(channels, rate)
}

/// Amplitude to PCM16: scale by 32768, round, clamp.
pub fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let nc = clip.n_channels();
    let data_len = clip.len() * nc * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&(nc as u16).to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * nc as u32 * 2).to_le_bytes());
    out.extend_from_slice(&((nc * 2) as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..clip.len() {
        for c in 0..nc {
            out.extend_from_slice(&quantize(clip.channel(c)[i]).to_le_bytes());
        }
    }
    out
}

pub fn save_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    fsio::write_atomic(path, &encode_wav(clip))
}
