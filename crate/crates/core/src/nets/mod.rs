//! Network blocks (per-lead encoder, shared decoder, gating MLP, classifier
//! head), the parameter store, and the checkpoint codec.

mod blocks;
mod checkpoint;
mod params;
mod spec;

pub use blocks::{
    build_classifier, build_decoder, build_encoder, build_gating, ClassifierConfig,
    EncoderConfig, ExpertNodes, GATE_HIDDEN, VAR_MAX, VAR_MIN,
};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use params::ParamStore;
pub use spec::ModelSpec;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] crate::diff::DiffError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
