//! Latent export: per record, the mean of every lead expert, the PoE
//! shared expert, and the fused joint — one row each, for external
//! projection or plotting.

use std::io::Write;
use std::path::Path;

use crate::diff::{Bindings, EvalOpts, Graph, GraphBuilder, NodeId};
use crate::fusion::build_fusion;
use crate::nets::{build_encoder, EncoderConfig, ParamStore};
use crate::signal::EcgRecord;

use super::batch::tensor_from_f64;
use super::trainer::validate_corpus;
use super::TrainError;

pub struct LatentRow {
    pub record_id: String,
    pub expert_id: String,
    pub mu: Vec<f32>,
}

struct EncodeGraph {
    graph: Graph<f32>,
    expert_mus: Vec<NodeId>,
    joint_mu: NodeId,
}

fn build_encode_graph(
    leads: &[String],
    cfg: &EncoderConfig,
) -> Result<EncodeGraph, TrainError> {
    let mut gb = GraphBuilder::<f32>::new();
    let mut experts = Vec::with_capacity(leads.len());
    for lead in leads {
        let (_, e) = build_encoder(&mut gb, lead, cfg)?;
        experts.push((e.mu, e.var));
    }
    let fusion = build_fusion(&mut gb, &experts, cfg.latent_dim, None)?;
    let graph = gb.finish(&[("joint_mu", fusion.joint_mu)]);
    Ok(EncodeGraph {
        graph,
        expert_mus: fusion.expert_mus,
        joint_mu: fusion.joint_mu,
    })
}

/// Rows per record: one per lead expert, then "PoE", then "MoE".
pub fn export_latents(
    params: &ParamStore<f32>,
    corpus: &[EcgRecord],
    latent_dim: usize,
) -> Result<Vec<LatentRow>, TrainError> {
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let (leads, len) = validate_corpus(corpus)?;
    let cfg = EncoderConfig::new(len, latent_dim);
    let built = build_encode_graph(&leads, &cfg)?;
    params
        .validate_against(&built.graph)
        .map_err(TrainError::from)?;

    let mut rows = Vec::with_capacity(corpus.len() * (leads.len() + 2));
    for rec in corpus {
        let mut inputs = Bindings::new();
        for (i, lead) in leads.iter().enumerate() {
            inputs.insert(format!("x.{lead}"), tensor_from_f64(rec.lead(i)));
        }
        let exec = built
            .graph
            .forward(params.bindings(), &inputs, EvalOpts::default())?;
        for (k, lead) in leads.iter().enumerate() {
            rows.push(LatentRow {
                record_id: rec.record_id.clone(),
                expert_id: lead.clone(),
                mu: exec.value(built.expert_mus[k]).expect("computed").data().to_vec(),
            });
        }
        rows.push(LatentRow {
            record_id: rec.record_id.clone(),
            expert_id: "PoE".into(),
            mu: exec
                .value(*built.expert_mus.last().expect("poe present"))
                .expect("computed")
                .data()
                .to_vec(),
        });
        rows.push(LatentRow {
            record_id: rec.record_id.clone(),
            expert_id: "MoE".into(),
            mu: exec.value(built.joint_mu).expect("computed").data().to_vec(),
        });
    }
    Ok(rows)
}

/// Tab-separated export with a header; vector components comma-joined.
pub fn write_latents(rows: &[LatentRow], path: &Path) -> Result<(), TrainError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "record_id\texpert_id\tmu")?;
    for row in rows {
        let mu: Vec<String> = row.mu.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}\t{}\t{}", row.record_id, row.expert_id, mu.join(","))?;
    }
    Ok(())
}
