//! ECG record model, binary codec, preprocessing, synthetic generation, and
//! P/Q/R/S/T delineation.

mod codec;
mod delineate;
mod preprocess;
mod record;
mod segments;
mod synth;

pub use codec::{read_csv, read_record, write_record};
pub use delineate::{delineate, delineate_lead};
pub use preprocess::{
    bandpass_filter, interpolate_missing, preprocess_record, preprocess_records,
    preprocess_records_seq, zscore, PreprocessWarning, Standardized, BAND_HIGH_HZ, BAND_LOW_HZ,
};
pub use record::{EcgRecord, LEADS_12, LEADS_AUGMENTED3, LEADS_BIPOLAR3, LEADS_LIMB6};
pub use segments::{write_segments, BeatWindows, Wave, WaveSegments, WaveWindow, WAVES};
pub use synth::{
    default_lead_scales, synthesize_corpus, synthesize_record, ClassEffect, CorpusSpec,
    SynthSpec, DEFAULT_CLASS_EFFECT, WINDOW_HALF_S,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("corrupt record file: {0}")]
    CorruptFile(String),
    #[error("not interpolatable: {0}")]
    NotInterpolatable(String),
    #[error("filter configuration: {0}")]
    FilterConfig(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("delineation failure: {0}")]
    DelineationFailure(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
