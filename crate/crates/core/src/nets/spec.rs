//! Model topology recovered from a parameter store's names and shapes, so a
//! checkpoint is self-describing.

use super::blocks::{EncoderConfig, GATE_HIDDEN};
use super::params::ParamStore;
use super::NetsError;
use crate::diff::Real;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    /// Leads with an encoder in the store, sorted by name.
    pub leads: Vec<String>,
    pub input_length: usize,
    pub latent_dim: usize,
    pub has_decoder: bool,
    pub has_classifier: bool,
}

impl ModelSpec {
    pub fn infer<T: Real>(store: &ParamStore<T>) -> Result<ModelSpec, NetsError> {
        let mut leads = Vec::new();
        for name in store.names() {
            if let Some(rest) = name.strip_prefix("enc.") {
                if let Some(lead) = rest.strip_suffix(".mu.w") {
                    leads.push(lead.to_string());
                }
            }
        }
        if leads.is_empty() {
            return Err(NetsError::Checkpoint("no encoders in store".into()));
        }
        let first = store
            .get(&format!("enc.{}.mu.w", leads[0]))
            .expect("listed above");
        let (latent_dim, flat) = (first.shape()[0], first.shape()[1]);
        if flat % 64 != 0 {
            return Err(NetsError::Checkpoint(format!(
                "flattened feature size {flat} is not 64 * L/8"
            )));
        }
        let input_length = flat / 64 * 8;
        for lead in &leads {
            let t = store
                .get(&format!("enc.{lead}.mu.w"))
                .expect("listed above");
            if t.shape() != [latent_dim, flat] {
                return Err(NetsError::Checkpoint(format!(
                    "encoder {lead} disagrees on latent dimension"
                )));
            }
        }
        match store.get("gate.fc0.w") {
            None => return Err(NetsError::Checkpoint("no gating network in store".into())),
            Some(t) if t.shape() != [GATE_HIDDEN, latent_dim] => {
                return Err(NetsError::Checkpoint("gating shape mismatch".into()))
            }
            _ => {}
        }
        Ok(ModelSpec {
            leads,
            input_length,
            latent_dim,
            has_decoder: store.get("dec.fc.w").is_some(),
            has_classifier: store.get("clf.fc0.w").is_some(),
        })
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig::new(self.input_length, self.latent_dim)
    }
}
