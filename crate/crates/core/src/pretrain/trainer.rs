//! Unsupervised pre-training loop: seeded shuffles, per-sample noise
//! streams, chunked batch gradients, gradient-norm guard, AdamW updates,
//! and a per-epoch loss log. Identical seeds reproduce checkpoints bitwise.

use std::io::Write;
use std::path::Path;

use crate::diff::{Bindings, CounterRng, EvalOpts};
use crate::loss::LossWeights;
use crate::nets::{EncoderConfig, ParamStore};
use crate::signal::EcgRecord;

use super::batch::{batch_gradients, batch_losses, tensor_from_f64};
use super::graph::{build_pretrain_graph, PretrainGraph, BETA_INPUT, EPS_INPUT};
use super::optimizer::{clip_global_norm, AdamW};
use super::schedule::beta_schedule;
use super::TrainError;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub latent_dim: usize,
    /// Per-lead reconstruction weights and alignment strength; defaults
    /// derive from the corpus lead set.
    pub loss_weights: Option<LossWeights>,
    pub seed: u64,
    /// Fraction held out for validation logging; 0 trains on everything.
    pub val_fraction: f64,
    /// Global gradient-norm guard.
    pub grad_clip: f64,
    /// Samples per parallel chunk; part of the deterministic reduction
    /// plan, so changing it changes the bitwise result.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            latent_dim: 256,
            loss_weights: None,
            seed: 0,
            val_fraction: 0.0,
            grad_clip: 100.0,
            chunk_size: 8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0
            || self.batch_size == 0
            || self.learning_rate <= 0.0
            || self.weight_decay < 0.0
            || self.latent_dim == 0
            || self.grad_clip <= 0.0
            || self.chunk_size == 0
            || !(0.0..1.0).contains(&self.val_fraction)
        {
            return Err(TrainError::Corpus("invalid training config".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mse: f64,
    pub kl: f64,
    pub alignment: f64,
    pub beta: f64,
    pub total: f64,
    pub val_total: Option<f64>,
}

pub struct PretrainOutput {
    pub params: ParamStore<f32>,
    pub log: Vec<EpochLog>,
    pub leads: Vec<String>,
    pub encoder: EncoderConfig,
}

/// Checks that every record shares the first record's lead set (in order)
/// and length, that the length is a multiple of 8, and that samples are
/// finite (i.e. preprocessed).
pub fn validate_corpus(corpus: &[EcgRecord]) -> Result<(Vec<String>, usize), TrainError> {
    let first = corpus
        .first()
        .ok_or_else(|| TrainError::Corpus("empty corpus".into()))?;
    let leads = first.lead_names.clone();
    let len = first.len();
    if len % 8 != 0 {
        return Err(TrainError::Corpus(format!(
            "record length {len} is not a multiple of 8"
        )));
    }
    for rec in corpus {
        if rec.lead_names != leads {
            return Err(TrainError::Corpus(format!(
                "record {} has a different lead set",
                rec.record_id
            )));
        }
        if rec.len() != len {
            return Err(TrainError::Corpus(format!(
                "record {} has length {}, expected {len}",
                rec.record_id,
                rec.len()
            )));
        }
        if rec.samples_flat().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Corpus(format!(
                "record {} has non-finite samples; preprocess first",
                rec.record_id
            )));
        }
    }
    Ok((leads, len))
}

/// Per-sample input bindings: lead signals plus a seeded noise draw.
fn sample_inputs(
    record: &EcgRecord,
    leads: &[String],
    latent_dim: usize,
    beta: f64,
    eps_rng: &CounterRng,
) -> Bindings<f32> {
    let mut inputs = Bindings::new();
    for (i, lead) in leads.iter().enumerate() {
        inputs.insert(format!("x.{lead}"), tensor_from_f64(record.lead(i)));
    }
    let mut rng = eps_rng.clone();
    let eps: Vec<f64> = (0..latent_dim).map(|_| rng.standard_normal()).collect();
    inputs.insert(EPS_INPUT, tensor_from_f64(&eps));
    inputs.insert(BETA_INPUT, tensor_from_f64(&[beta]));
    inputs
}

const TRACK: [&str; 4] = ["mse", "kl", "alignment", "total"];

pub fn pretrain(corpus: &[EcgRecord], cfg: &TrainConfig) -> Result<PretrainOutput, TrainError> {
    cfg.validate()?;
    let (leads, len) = validate_corpus(corpus)?;
    let encoder = EncoderConfig::new(len, cfg.latent_dim);
    let weights = cfg
        .loss_weights
        .clone()
        .unwrap_or_else(|| LossWeights::default_for(&leads));
    let built: PretrainGraph<f32> = build_pretrain_graph(&leads, &encoder, &weights)?;
    let mut params = ParamStore::init_for(&built.graph, cfg.seed);
    let mut optimizer = AdamW::new();
    let root = CounterRng::new(cfg.seed);

    // Optional holdout split, seeded.
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut split_rng = root.derive_str("split");
    split_rng.shuffle(&mut order);
    let n_val = (cfg.val_fraction * corpus.len() as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx: Vec<usize> = train_idx.to_vec();
    let val_idx: Vec<usize> = val_idx.to_vec();
    if train_idx.is_empty() {
        return Err(TrainError::Corpus("no training records after split".into()));
    }

    let mut log: Vec<EpochLog> = Vec::with_capacity(cfg.epochs);
    let mut last_good = params.clone();
    for epoch in 0..cfg.epochs {
        let beta = beta_schedule(epoch, cfg.epochs);
        let mut shuffle_rng = root.derive_str("shuffle").derive(epoch as u64);
        shuffle_rng.shuffle(&mut train_idx);

        let mut sums = [0.0f64; 4];
        let mut seen = 0usize;
        for batch in train_idx.chunks(cfg.batch_size) {
            let inputs: Vec<Bindings<f32>> = batch
                .iter()
                .map(|&i| {
                    sample_inputs(
                        &corpus[i],
                        &leads,
                        cfg.latent_dim,
                        beta,
                        &root.derive_str("eps").derive(epoch as u64).derive(i as u64),
                    )
                })
                .collect();
            let result = batch_gradients(
                &built.graph,
                &params,
                &inputs,
                |_| EvalOpts::default(),
                "total",
                &TRACK,
                cfg.chunk_size,
            )?;
            let batch_total = result.mean_loss("total");
            if !batch_total.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    last_checkpoint: Box::new(last_good),
                    log,
                });
            }
            for (slot, name) in sums.iter_mut().zip(TRACK) {
                *slot += result.loss_sums[name];
            }
            seen += result.count;
            let mut grads = result.mean_grads();
            clip_global_norm(&mut grads, cfg.grad_clip);
            optimizer.step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay);
        }

        let val_total = if val_idx.is_empty() {
            None
        } else {
            let inputs: Vec<Bindings<f32>> = val_idx
                .iter()
                .map(|&i| {
                    sample_inputs(
                        &corpus[i],
                        &leads,
                        cfg.latent_dim,
                        beta,
                        &root.derive_str("val-eps").derive(epoch as u64).derive(i as u64),
                    )
                })
                .collect();
            let losses = batch_losses(
                &built.graph,
                &params,
                &inputs,
                |_| EvalOpts::default(),
                &["total"],
                cfg.chunk_size,
            )?;
            Some(losses["total"])
        };

        let n = seen as f64;
        log.push(EpochLog {
            epoch,
            mse: sums[0] / n,
            kl: sums[1] / n,
            alignment: sums[2] / n,
            beta,
            total: sums[3] / n,
            val_total,
        });
        last_good = params.clone();
    }

    Ok(PretrainOutput {
        params,
        log,
        leads,
        encoder,
    })
}

/// Line-oriented training log: one row per epoch.
pub fn write_train_log(log: &[EpochLog], path: &Path) -> Result<(), TrainError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch\tmse\tkl\talignment\tbeta\ttotal\tval_total")?;
    for e in log {
        let val = e
            .val_total
            .map(|v| format!("{v:.9}"))
            .unwrap_or_else(|| "-".to_string());
        writeln!(
            w,
            "{}\t{:.9}\t{:.9}\t{:.9}\t{:.6}\t{:.9}\t{}",
            e.epoch, e.mse, e.kl, e.alignment, e.beta, e.total, val
        )?;
    }
    Ok(())
}
