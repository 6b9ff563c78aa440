//! Deterministic stand-ins for a text encoder and a diffusion denoiser.

mod denoiser;
mod encoder;
mod story;
mod tokenizer;

pub use denoiser::{Conditioning, FrameFeatures, ToyDenoiser, ToyDenoiserConfig};
pub use encoder::{ToyEncoder, ToyEncoderConfig, ENCODER_TAG};
pub use story::{replay, run_story, seeded_encoder_config, FrameRecord, Mode, RunManifest, Seeds, StoryConfig, StoryRun};
pub use tokenizer::HashTokenizer;
