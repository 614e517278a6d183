//! Audio I/O and the log-Mel feature front end.

pub mod audio;
pub mod features;
pub mod framing;
pub mod mel;
pub mod stft;
pub mod wav;

pub use audio::{AudioClip, DEFAULT_SAMPLE_RATE};
pub use features::{
    denormalize, fit_norm_stats, load_features, load_stats, log_mel, normalize, save_features, save_stats,
    FrontEnd, LogMelSpectrogram, NormStats,
};
pub use framing::{frame_windows, reassemble, Placement};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelConfig, MelFilterBank};
pub use stft::{stft_magnitude, Magnitudes, StftConfig, WindowFn};
pub use wav::{load_wav, save_wav};
