//! Multi-condition training data: speech-like signals, noise textures,
//! simulated rooms and SNR-controlled mixing.

pub mod corpus;
pub mod noise;
pub mod rir;
pub mod room;
pub mod snr;
pub mod speech;

pub use corpus::{build_pair, write_corpus, Manifest, ManifestEntry, Reverb, SynthConfig, UtterancePair, MANIFEST_NAME};
pub use noise::{NoiseBank, NoiseSource};
pub use rir::{convolve_rir, estimate_t60, image_sources, rir_image_source, Rir, DEFAULT_MAX_ORDER, RIR_HIGHPASS_HZ};
pub use room::{sample_room, t60_to_absorption, RoomConfig, Split};
pub use snr::{mix_at_snr, snr_gain, SnrSampler};
pub use speech::synth_clean_utterance;
