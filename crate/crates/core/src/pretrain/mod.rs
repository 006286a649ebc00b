//! Unsupervised pre-training: KL anneal schedule, AdamW, the epoch driver,
//! checkpointing helpers, and latent export.

mod batch;
mod graph;
mod latents;
mod optimizer;
mod schedule;
mod trainer;

pub use batch::{batch_gradients, batch_gradients_seq, batch_losses, tensor_from_f64, BatchResult};
pub use graph::{build_pretrain_graph, PretrainGraph, BETA_INPUT, EPS_INPUT};
pub use latents::{export_latents, write_latents, LatentRow};
pub use optimizer::{clip_global_norm, AdamW};
pub use schedule::beta_schedule;
pub use trainer::{
    pretrain, validate_corpus, write_train_log, EpochLog, PretrainOutput, TrainConfig,
};

use thiserror::Error;

use crate::nets::ParamStore;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("training diverged at epoch {epoch}; last finite checkpoint retained")]
    Divergence {
        epoch: usize,
        last_checkpoint: Box<ParamStore<f32>>,
        log: Vec<EpochLog>,
    },
    #[error(transparent)]
    Nets(#[from] crate::nets::NetsError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error(transparent)]
    Diff(#[from] crate::diff::DiffError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
