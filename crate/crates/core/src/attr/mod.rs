//! Integrated-gradients attribution over the fine-tuned classifier and the
//! lead-level / wave-level attribution-ratio metrics.

mod ig;
mod ratio;
mod report;

pub use ig::{integrated_gradients, integrated_gradients_graph};
pub use ratio::{lead_ratio, normalize_minmax, salient_set, wave_ratios, TAU_DEFAULT};
pub use report::{
    attribution_map, igar_report, igar_report_seq, write_attribution_dump, write_report,
    AttrReport, AttributionMap, LeadAttribution, MeanStd,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttrError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Diff(#[from] crate::diff::DiffError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Default integration resolution for reports; completeness verification
/// uses 256.
pub const STEPS_DEFAULT: usize = 64;
