//! Network configurations, parameter sets and forward passes.

pub mod config;
pub mod nets;
pub mod params;

pub use config::{FseganConfig, ModelConfig, ModelKind, SeganConfig, FSEGAN_DISC_LAYERS};
pub use nets::{
    discriminator, discriminator_emits_probabilities, fsegan_discriminator, fsegan_encoder, fsegan_generator, generator,
    run_discriminator, run_generator, segan_discriminator, segan_encoder, segan_generator, LEAKY_SLOPE,
};
pub use params::{
    arch_tag, decode_checkpoint, encode_checkpoint, init_params, load_checkpoint, load_checkpoint_as, param_count,
    param_specs, save_checkpoint, Init, ModelParams, ParamSpec, Role,
};
