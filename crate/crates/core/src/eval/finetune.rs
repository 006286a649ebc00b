//! Frozen-encoder fine-tuning with stratified cross-validation.
//!
//! Encoders are frozen, so each record's lead experts are computed once and
//! cached; per fold, a fresh classifier head (and optionally the gate)
//! trains on the fused latent mean with cross-entropy. Scores are
//! deterministic for a fixed seed.

use std::io::Write;
use std::path::Path;

use crate::diff::{Bindings, CounterRng, EvalOpts, GraphBuilder};
use crate::exec;
use crate::loss::onehot2;
use crate::nets::{build_encoder, ParamStore};
use crate::pretrain::{batch_gradients, clip_global_norm, tensor_from_f64, AdamW};
use crate::signal::EcgRecord;

use super::kfold::kfold_split;
use super::metrics::{accuracy, auroc, mcc, Confusion};
use super::model::{build_finetune_model, build_head_graph, prob_positive, FinetuneConfig};
use super::EvalError;

/// Cached diagonal-Gaussian expert of one lead for one record.
#[derive(Clone, Debug)]
pub struct CachedExpert {
    pub mu: Vec<f32>,
    pub var: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub auroc: f64,
    pub mcc: f64,
}

#[derive(Clone, Debug)]
pub struct MetricReport {
    pub folds: Vec<FoldMetrics>,
}

impl MetricReport {
    pub fn mean_std(&self, pick: impl Fn(&FoldMetrics) -> f64) -> (f64, f64) {
        let n = self.folds.len() as f64;
        let mean = self.folds.iter().map(&pick).sum::<f64>() / n;
        let var = self
            .folds
            .iter()
            .map(|f| {
                let d = pick(f) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    /// Per-fold rows, then mean and std rows.
    pub fn to_text(&self) -> String {
        let mut out = String::from("fold\taccuracy\tauroc\tmcc\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                f.fold, f.accuracy, f.auroc, f.mcc
            ));
        }
        let (acc_m, acc_s) = self.mean_std(|f| f.accuracy);
        let (auc_m, auc_s) = self.mean_std(|f| f.auroc);
        let (mcc_m, mcc_s) = self.mean_std(|f| f.mcc);
        out.push_str(&format!("mean\t{acc_m:.6}\t{auc_m:.6}\t{mcc_m:.6}\n"));
        out.push_str(&format!("std\t{acc_s:.6}\t{auc_s:.6}\t{mcc_s:.6}\n"));
        out
    }
}

/// One validation prediction: record index, fold, positive-class score,
/// hard prediction, true label.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub record_index: usize,
    pub fold: usize,
    pub score: f64,
    pub predicted: u8,
    pub label: u8,
}

pub struct FinetuneOutput {
    pub report: MetricReport,
    /// Every record's out-of-fold prediction.
    pub predictions: Vec<Prediction>,
    /// Trained full parameter store per fold (frozen parts + classifier).
    pub fold_params: Vec<ParamStore<f32>>,
    pub fold_assignment: Vec<usize>,
}

/// Binary labels from the corpus records.
pub fn corpus_labels(corpus: &[EcgRecord]) -> Result<Vec<u8>, EvalError> {
    corpus
        .iter()
        .map(|r| match r.label {
            Some(0) => Ok(0u8),
            Some(1) => Ok(1u8),
            Some(other) => Err(EvalError::Domain(format!(
                "record {} label {other} is not binary",
                r.record_id
            ))),
            None => Err(EvalError::Domain(format!(
                "record {} has no label",
                r.record_id
            ))),
        })
        .collect()
}

/// Frozen lead experts per record, computed once (records fan out in
/// parallel).
pub fn cache_experts(
    params: &ParamStore<f32>,
    corpus: &[EcgRecord],
    leads: &[String],
    latent_dim: usize,
    input_length: usize,
) -> Result<Vec<Vec<CachedExpert>>, EvalError> {
    let mut gb = GraphBuilder::<f32>::new();
    let cfg = crate::nets::EncoderConfig::new(input_length, latent_dim);
    let mut expert_nodes = Vec::new();
    for lead in leads {
        let (_, e) = build_encoder(&mut gb, lead, &cfg)?;
        expert_nodes.push(e);
    }
    // Finish with per-lead outputs.
    let outputs: Vec<(String, crate::diff::NodeId)> = leads
        .iter()
        .zip(&expert_nodes)
        .flat_map(|(lead, e)| {
            [
                (format!("mu.{lead}"), e.mu),
                (format!("var.{lead}"), e.var),
            ]
        })
        .collect();
    let output_refs: Vec<(&str, crate::diff::NodeId)> =
        outputs.iter().map(|(n, id)| (n.as_str(), *id)).collect();
    let graph = gb.finish(&output_refs);

    let results = exec::map_items(corpus, |_, rec| -> Result<Vec<CachedExpert>, EvalError> {
        let mut inputs = Bindings::new();
        for lead in leads {
            let idx = rec
                .lead_index(lead)
                .ok_or_else(|| EvalError::LeadNotFound(lead.clone()))?;
            inputs.insert(format!("x.{lead}"), tensor_from_f64(rec.lead(idx)));
        }
        let exec_state = graph
            .forward(params.bindings(), &inputs, EvalOpts::default())
            .map_err(crate::nets::NetsError::from)?;
        leads
            .iter()
            .map(|lead| {
                let mu = exec_state
                    .value(graph.output(&format!("mu.{lead}")).expect("declared"))
                    .expect("computed")
                    .data()
                    .to_vec();
                let var = exec_state
                    .value(graph.output(&format!("var.{lead}")).expect("declared"))
                    .expect("computed")
                    .data()
                    .to_vec();
                Ok(CachedExpert { mu, var })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn head_inputs(
    experts: &[CachedExpert],
    leads: &[String],
    label: Option<u8>,
) -> Bindings<f32> {
    let mut inputs = Bindings::new();
    for (lead, e) in leads.iter().zip(experts) {
        inputs.insert(
            format!("mu.{lead}"),
            crate::diff::Tensor::from_vec(e.mu.clone()),
        );
        inputs.insert(
            format!("var.{lead}"),
            crate::diff::Tensor::from_vec(e.var.clone()),
        );
    }
    inputs.insert("label", onehot2::<f32>(label.unwrap_or(0) as usize));
    inputs
}

pub fn finetune(
    pretrained: &ParamStore<f32>,
    corpus: &[EcgRecord],
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput, EvalError> {
    cfg.validate()?;
    let labels = corpus_labels(corpus)?;
    let base = build_finetune_model(pretrained, cfg)?;
    let spec = crate::nets::ModelSpec::infer(&base)?;
    for rec in corpus {
        if rec.len() != spec.input_length {
            return Err(EvalError::Domain(format!(
                "record {} length {} != model length {}",
                rec.record_id,
                rec.len(),
                spec.input_length
            )));
        }
    }
    let cache = cache_experts(
        &base,
        corpus,
        &cfg.lead_subset,
        spec.latent_dim,
        spec.input_length,
    )?;
    let head = build_head_graph(&cfg.lead_subset, spec.latent_dim, &cfg.classifier)?;
    let assignment = kfold_split(&labels, cfg.folds, cfg.seed)?;
    let frozen_digest = base.digest_frozen();
    let root = CounterRng::new(cfg.seed).derive_str("finetune");

    let mut folds = Vec::with_capacity(cfg.folds);
    let mut predictions: Vec<Prediction> = Vec::with_capacity(corpus.len());
    let mut fold_params = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..corpus.len())
            .filter(|&i| assignment[i] != fold)
            .collect();
        let val_idx: Vec<usize> = (0..corpus.len())
            .filter(|&i| assignment[i] == fold)
            .collect();
        for split in [&train_idx, &val_idx] {
            let has_both = split.iter().any(|&i| labels[i] == 0)
                && split.iter().any(|&i| labels[i] == 1);
            if !has_both {
                return Err(EvalError::Stratification(format!(
                    "fold {fold} split is single-class"
                )));
            }
        }

        // Fresh classifier per fold; frozen parts shared from the base.
        let mut params = base.clone();
        let fresh = ParamStore::<f32>::init_for(&head.graph, root.derive(fold as u64).next_key());
        for name in fresh.names() {
            if name.starts_with("clf.") {
                params.insert(name.clone(), fresh.get(&name).expect("listed").clone());
            }
        }

        let mut optimizer = AdamW::new();
        let mut order = train_idx.clone();
        for epoch in 0..cfg.epochs {
            let mut shuffle_rng = root
                .derive_str("shuffle")
                .derive(fold as u64)
                .derive(epoch as u64);
            shuffle_rng.shuffle(&mut order);
            for batch in order.chunks(cfg.batch_size) {
                let inputs: Vec<Bindings<f32>> = batch
                    .iter()
                    .map(|&i| head_inputs(&cache[i], &cfg.lead_subset, Some(labels[i])))
                    .collect();
                let keys: Vec<u64> = batch
                    .iter()
                    .map(|&i| {
                        root.derive_str("dropout")
                            .derive(fold as u64)
                            .derive(epoch as u64)
                            .derive(i as u64)
                            .next_key()
                    })
                    .collect();
                let result = batch_gradients(
                    &head.graph,
                    &params,
                    &inputs,
                    |s| EvalOpts {
                        train: true,
                        dropout_key: keys[s],
                    },
                    "loss",
                    &["loss"],
                    cfg.chunk_size,
                )
                .map_err(crate::nets::NetsError::from)?;
                if !result.loss_sums["loss"].is_finite() {
                    return Err(EvalError::Domain(format!(
                        "fold {fold} loss diverged at epoch {epoch}"
                    )));
                }
                let mut grads = result.mean_grads();
                clip_global_norm(&mut grads, 100.0);
                optimizer.step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay);
            }
        }

        // Out-of-fold evaluation on the deterministic fused mean.
        let mut scores = Vec::with_capacity(val_idx.len());
        let mut preds = Vec::with_capacity(val_idx.len());
        let mut fold_labels = Vec::with_capacity(val_idx.len());
        for &i in &val_idx {
            let inputs = head_inputs(&cache[i], &cfg.lead_subset, None);
            let exec_state = head
                .graph
                .forward(params.bindings(), &inputs, EvalOpts::default())
                .map_err(crate::nets::NetsError::from)?;
            let logits = exec_state.value(head.logits).expect("computed").data();
            let logits = [logits[0] as f64, logits[1] as f64];
            let score = prob_positive(logits);
            let predicted = u8::from(logits[1] > logits[0]);
            scores.push(score);
            preds.push(predicted);
            fold_labels.push(labels[i]);
            predictions.push(Prediction {
                record_index: i,
                fold,
                score,
                predicted,
                label: labels[i],
            });
        }
        folds.push(FoldMetrics {
            fold,
            accuracy: accuracy(&preds, &fold_labels)?,
            auroc: auroc(&scores, &fold_labels)?,
            mcc: mcc(Confusion::from_predictions(&preds, &fold_labels)?),
        });
        fold_params.push(params);
    }

    // Freeze contract: pretrained tensors are bitwise unchanged.
    for params in &fold_params {
        if params.digest_frozen() != frozen_digest {
            return Err(EvalError::Domain(
                "frozen parameters changed during fine-tuning".into(),
            ));
        }
    }

    Ok(FinetuneOutput {
        report: MetricReport { folds },
        predictions,
        fold_params,
        fold_assignment: assignment,
    })
}

pub fn write_report(report: &MetricReport, path: &Path) -> Result<(), EvalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(report.to_text().as_bytes())?;
    Ok(())
}
