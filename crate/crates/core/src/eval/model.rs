//! Fine-tune model assembly: retained lead encoders + gating from a
//! pre-trained checkpoint (frozen), decoder dropped, fresh classifier head.
//! The classifier consumes the fused latent mean deterministically; no
//! sampling at fine-tune time.

use crate::diff::{Bindings, EvalOpts, Graph, GraphBuilder, NodeId};
use crate::fusion::build_fusion;
use crate::loss::build_cross_entropy;
use crate::nets::{
    build_classifier, build_encoder, ClassifierConfig, EncoderConfig, ModelSpec, ParamStore,
};
use crate::pretrain::tensor_from_f64;
use crate::signal::EcgRecord;

use super::EvalError;

#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    pub lead_subset: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub classifier: ClassifierConfig,
    pub folds: usize,
    pub seed: u64,
    /// Train the gating network alongside the classifier (ablation);
    /// encoders stay frozen regardless.
    pub unfreeze_gate: bool,
    pub chunk_size: usize,
}

impl FinetuneConfig {
    pub fn new(lead_subset: Vec<String>) -> Self {
        FinetuneConfig {
            lead_subset,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            classifier: ClassifierConfig::default(),
            folds: 5,
            seed: 0,
            unfreeze_gate: false,
            chunk_size: 8,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.lead_subset.is_empty() {
            return Err(EvalError::Domain("empty lead subset".into()));
        }
        if self.folds < 2 || self.epochs == 0 || self.batch_size == 0 {
            return Err(EvalError::Domain("invalid fine-tune config".into()));
        }
        if self.learning_rate <= 0.0 || self.weight_decay < 0.0 || self.chunk_size == 0 {
            return Err(EvalError::Domain("invalid fine-tune config".into()));
        }
        Ok(())
    }
}

/// Classifier over cached lead experts: inputs `mu.<lead>` / `var.<lead>`
/// plus a `label` one-hot; outputs `logits` and `loss`.
pub struct HeadGraph {
    pub graph: Graph<f32>,
    pub logits: NodeId,
    pub loss: NodeId,
}

pub fn build_head_graph(
    leads: &[String],
    latent_dim: usize,
    classifier: &ClassifierConfig,
) -> Result<HeadGraph, EvalError> {
    let mut gb = GraphBuilder::<f32>::new();
    let mut experts = Vec::with_capacity(leads.len());
    for lead in leads {
        let mu = gb
            .input(&format!("mu.{lead}"), &[latent_dim])
            .map_err(crate::nets::NetsError::from)?;
        let var = gb
            .input(&format!("var.{lead}"), &[latent_dim])
            .map_err(crate::nets::NetsError::from)?;
        experts.push((mu, var));
    }
    let fusion = build_fusion(&mut gb, &experts, latent_dim, None)?;
    let logits = build_classifier(&mut gb, fusion.joint_mu, latent_dim, classifier)?;
    let onehot = gb
        .input("label", &[2])
        .map_err(crate::nets::NetsError::from)?;
    let loss = build_cross_entropy(&mut gb, logits, onehot)?;
    let graph = gb.finish(&[("logits", logits), ("loss", loss)]);
    Ok(HeadGraph {
        graph,
        logits,
        loss,
    })
}

/// Full signal-to-logits graph (encoders + fusion + classifier), used for
/// scoring records and for input attribution. `class_logits` are scalar
/// slices of the logit vector, one per class, for class-targeted backward
/// passes.
pub struct FullGraph {
    pub graph: Graph<f32>,
    pub logits: NodeId,
    pub class_logits: [NodeId; 2],
}

pub fn build_full_graph(
    leads: &[String],
    encoder: &EncoderConfig,
    classifier: &ClassifierConfig,
) -> Result<FullGraph, EvalError> {
    let mut gb = GraphBuilder::<f32>::new();
    let mut experts = Vec::with_capacity(leads.len());
    for lead in leads {
        let (_, e) = build_encoder(&mut gb, lead, encoder)?;
        experts.push((e.mu, e.var));
    }
    let fusion = build_fusion(&mut gb, &experts, encoder.latent_dim, None)?;
    let logits = build_classifier(&mut gb, fusion.joint_mu, encoder.latent_dim, classifier)?;
    let l0 = gb.slice(logits, 0, 1).map_err(crate::nets::NetsError::from)?;
    let l1 = gb.slice(logits, 1, 1).map_err(crate::nets::NetsError::from)?;
    let graph = gb.finish(&[("logits", logits), ("logit0", l0), ("logit1", l1)]);
    Ok(FullGraph {
        graph,
        logits,
        class_logits: [l0, l1],
    })
}

/// Drops the decoder, keeps only the requested lead encoders plus the
/// gating network (frozen; gate optionally trainable), and attaches a
/// freshly initialized classifier head.
pub fn build_finetune_model(
    pretrained: &ParamStore<f32>,
    cfg: &FinetuneConfig,
) -> Result<ParamStore<f32>, EvalError> {
    cfg.validate()?;
    let spec = ModelSpec::infer(pretrained)?;
    for lead in &cfg.lead_subset {
        if !spec.leads.contains(lead) {
            return Err(EvalError::LeadNotFound(lead.clone()));
        }
    }
    let mut out = ParamStore::new(Bindings::new());
    for name in pretrained.names() {
        let keep_encoder = cfg
            .lead_subset
            .iter()
            .any(|lead| name.starts_with(&format!("enc.{lead}.")));
        if keep_encoder || name.starts_with("gate.") {
            out.insert(name.clone(), pretrained.get(&name).expect("listed").clone());
        }
    }
    // Fresh classifier, seeded independently of the encoder init.
    let head = build_head_graph(&cfg.lead_subset, spec.latent_dim, &cfg.classifier)?;
    let fresh = ParamStore::<f32>::init_for(&head.graph, cfg.seed ^ 0xC1A5);
    for name in fresh.names() {
        if name.starts_with("clf.") {
            out.insert(name.clone(), fresh.get(&name).expect("listed").clone());
        }
    }
    out.freeze_matching("enc.");
    if !cfg.unfreeze_gate {
        out.freeze_matching("gate.");
    }
    Ok(out)
}

/// A fine-tuned model ready for scoring and attribution.
pub struct FinetunedModel {
    pub params: ParamStore<f32>,
    pub leads: Vec<String>,
    pub encoder: EncoderConfig,
    pub classifier: ClassifierConfig,
    full: FullGraph,
}

impl FinetunedModel {
    pub fn new(
        params: ParamStore<f32>,
        leads: Vec<String>,
        classifier: ClassifierConfig,
    ) -> Result<FinetunedModel, EvalError> {
        let spec = ModelSpec::infer(&params)?;
        for lead in &leads {
            if !spec.leads.contains(lead) {
                return Err(EvalError::LeadNotFound(lead.clone()));
            }
        }
        let encoder = spec.encoder_config();
        let full = build_full_graph(&leads, &encoder, &classifier)?;
        params.validate_against(&full.graph).map_err(EvalError::from)?;
        Ok(FinetunedModel {
            params,
            leads,
            encoder,
            classifier,
            full,
        })
    }

    /// Loads a fine-tuned checkpoint; the lead order is the checkpoint's
    /// sorted lead set (fusion moments are order-invariant).
    pub fn from_store(params: ParamStore<f32>) -> Result<FinetunedModel, EvalError> {
        let spec = ModelSpec::infer(&params)?;
        if !spec.has_classifier {
            return Err(EvalError::Domain(
                "store has no classifier head; fine-tune first".into(),
            ));
        }
        let fc_size = params.get("clf.fc0.w").expect("classifier present").shape()[0];
        let classifier = ClassifierConfig {
            fc_size,
            ..ClassifierConfig::default()
        };
        FinetunedModel::new(params.clone(), spec.leads.clone(), classifier)
    }

    pub fn graph(&self) -> &Graph<f32> {
        &self.full.graph
    }

    pub fn logits_node(&self) -> NodeId {
        self.full.logits
    }

    pub fn class_logit_node(&self, class: usize) -> NodeId {
        self.full.class_logits[class]
    }

    pub fn record_inputs(&self, record: &EcgRecord) -> Result<Bindings<f32>, EvalError> {
        let mut inputs = Bindings::new();
        for lead in &self.leads {
            let idx = record
                .lead_index(lead)
                .ok_or_else(|| EvalError::LeadNotFound(lead.clone()))?;
            if record.len() != self.encoder.input_length {
                return Err(EvalError::Domain(format!(
                    "record {} length {} != model length {}",
                    record.record_id,
                    record.len(),
                    self.encoder.input_length
                )));
            }
            inputs.insert(format!("x.{lead}"), tensor_from_f64(record.lead(idx)));
        }
        Ok(inputs)
    }

    /// Deterministic class logits for one record (dropout off).
    pub fn score(&self, record: &EcgRecord) -> Result<[f64; 2], EvalError> {
        let inputs = self.record_inputs(record)?;
        let exec = self
            .full
            .graph
            .forward(self.params.bindings(), &inputs, EvalOpts::default())
            .map_err(crate::nets::NetsError::from)?;
        let logits = exec.value(self.full.logits).expect("computed").data();
        Ok([logits[0] as f64, logits[1] as f64])
    }
}

/// Positive-class probability from the two logits.
pub fn prob_positive(logits: [f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    e1 / (e0 + e1)
}
