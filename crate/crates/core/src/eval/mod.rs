//! Fine-tuning on frozen encoders, stratified cross-validation, metrics,
//! subgroup evaluation, and the CMRI wedge-pressure labeling utility.

mod finetune;
mod kfold;
mod labels;
mod metrics;
mod model;
mod pawp;
mod subgroup;

pub use finetune::{
    cache_experts, corpus_labels, finetune, write_report, CachedExpert, FinetuneOutput,
    FoldMetrics, MetricReport, Prediction,
};
pub use kfold::kfold_split;
pub use labels::{read_labels_file, write_labels_file, LabelEntry};
pub use metrics::{accuracy, auroc, mcc, Confusion};
pub use model::{
    build_finetune_model, build_full_graph, build_head_graph, prob_positive, FinetuneConfig,
    FinetunedModel, FullGraph, HeadGraph,
};
pub use pawp::{pawp_from_cmr, PawpClass, PAWP_THRESHOLD_MMHG};
pub use subgroup::{subgroup_report, GroupOutcome, SubgroupReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("lead not found in checkpoint: {0}")]
    LeadNotFound(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Nets(#[from] crate::nets::NetsError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
