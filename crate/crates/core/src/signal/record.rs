use std::collections::BTreeSet;

use super::SignalError;

/// Multi-lead ECG time series: the unit of ingestion, preprocessing, and
/// attribution. Samples are row-major `[num_leads x len]`, millivolt-scaled
/// (arbitrary after z-scoring).
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    pub sample_rate_hz: f64,
    pub lead_names: Vec<String>,
    samples: Vec<f64>,
    len: usize,
    /// Optional binary class label.
    pub label: Option<i32>,
    /// Optional subgroup tag (e.g. sex) for per-group evaluation.
    pub group_tag: Option<String>,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        sample_rate_hz: f64,
        lead_names: Vec<String>,
        leads: Vec<Vec<f64>>,
    ) -> Result<Self, SignalError> {
        if sample_rate_hz <= 0.0 || !sample_rate_hz.is_finite() {
            return Err(SignalError::Spec(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if lead_names.is_empty() || lead_names.len() != leads.len() {
            return Err(SignalError::Spec(format!(
                "{} lead names for {} leads",
                lead_names.len(),
                leads.len()
            )));
        }
        let unique: BTreeSet<&String> = lead_names.iter().collect();
        if unique.len() != lead_names.len() {
            return Err(SignalError::Spec("duplicate lead names".into()));
        }
        let len = leads[0].len();
        if len < 8 {
            return Err(SignalError::Spec(format!("lead length {len} < 8")));
        }
        if leads.iter().any(|l| l.len() != len) {
            return Err(SignalError::Spec("leads differ in length".into()));
        }
        let mut samples = Vec::with_capacity(lead_names.len() * len);
        for lead in &leads {
            samples.extend_from_slice(lead);
        }
        Ok(EcgRecord {
            record_id: record_id.into(),
            sample_rate_hz,
            lead_names,
            samples,
            len,
            label: None,
            group_tag: None,
        })
    }

    pub fn with_label(mut self, label: i32) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_group(mut self, tag: impl Into<String>) -> Self {
        self.group_tag = Some(tag.into());
        self
    }

    pub fn num_leads(&self) -> usize {
        self.lead_names.len()
    }

    /// Samples per lead.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lead(&self, index: usize) -> &[f64] {
        &self.samples[index * self.len..(index + 1) * self.len]
    }

    pub fn lead_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.samples[index * self.len..(index + 1) * self.len]
    }

    pub fn lead_index(&self, name: &str) -> Option<usize> {
        self.lead_names.iter().position(|n| n == name)
    }

    pub fn lead_by_name(&self, name: &str) -> Option<&[f64]> {
        self.lead_index(name).map(|i| self.lead(i))
    }

    pub fn samples_flat(&self) -> &[f64] {
        &self.samples
    }
}

/// Standard 12-lead names in conventional order.
pub const LEADS_12: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// The six limb leads recordable by handheld devices.
pub const LEADS_LIMB6: [&str; 6] = ["I", "II", "III", "aVR", "aVL", "aVF"];

pub const LEADS_BIPOLAR3: [&str; 3] = ["I", "II", "III"];

pub const LEADS_AUGMENTED3: [&str; 3] = ["aVR", "aVL", "aVF"];
