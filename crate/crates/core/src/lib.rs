//! Training-free identity-consistent story generation.
//!
//! A story is an identity prompt plus a list of frame prompts. Instead of
//! encoding each frame on its own, every frame is placed in one consolidated
//! prompt so the text encoder binds them to one subject. Per frame, the
//! consolidated embedding is then reweighted so that the current frame is
//! expressed and the others are suppressed ([`reweighting`]), and
//! cross-attention is extended with an identity-only copy of the prompt
//! ([`ipca`]).
//!
//! The [`toy`] module supplies a seeded text encoder and cross-attention
//! denoiser so the whole pipeline runs deterministically on a laptop;
//! [`interchange`] reads embeddings exported from real encoders.

pub mod analysis;
pub mod cli;
pub mod consolidation;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod interchange;
pub mod ipca;
pub mod model;
pub mod reweighting;
pub mod seed;
pub mod toy;

pub use error::{Error, Result};
pub use model::{AttentionBundle, EmbeddingMatrix, PromptLayout, PromptSet, Superclass, SvrParams, TokenSpan};
