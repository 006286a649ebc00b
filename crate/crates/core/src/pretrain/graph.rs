//! Assembly of the full pre-training graph: per-lead encoders, two-level
//! fusion with a sampled latent, the shared decoder, and the combined loss.

use crate::diff::{Graph, GraphBuilder, NodeId, Real};
use crate::fusion::{build_fusion, FusionNodes};
use crate::loss::{build_pretrain_loss, LossWeights, PretrainLossNodes};
use crate::nets::{build_decoder, build_encoder, EncoderConfig};

use super::TrainError;

pub const EPS_INPUT: &str = "eps";
pub const BETA_INPUT: &str = "beta";

pub struct PretrainGraph<T> {
    pub graph: Graph<T>,
    pub leads: Vec<String>,
    pub fusion: FusionNodes,
    pub recon: NodeId,
    pub loss: PretrainLossNodes,
}

/// Inputs per sample: `x.<lead>` for every lead, `eps` [d], `beta` [1].
/// Outputs: `mse`, `kl`, `alignment`, `total`, plus the fused moments.
pub fn build_pretrain_graph<T: Real>(
    leads: &[String],
    cfg: &EncoderConfig,
    weights: &LossWeights,
) -> Result<PretrainGraph<T>, TrainError> {
    if leads.is_empty() {
        return Err(TrainError::Corpus("no leads".into()));
    }
    if weights.lambda.len() != leads.len() {
        return Err(TrainError::Corpus(format!(
            "{} lambda weights for {} leads",
            weights.lambda.len(),
            leads.len()
        )));
    }
    let mut gb = GraphBuilder::<T>::new();
    let mut experts = Vec::with_capacity(leads.len());
    let mut lead_inputs = Vec::with_capacity(leads.len());
    for lead in leads {
        let (x, expert) = build_encoder(&mut gb, lead, cfg)?;
        lead_inputs.push(x);
        experts.push((expert.mu, expert.var));
    }
    let fusion = build_fusion(&mut gb, &experts, cfg.latent_dim, Some(EPS_INPUT))?;
    let z = fusion.z.expect("eps input wired");
    let recon = build_decoder(&mut gb, z, cfg)?;
    let beta = gb
        .input(BETA_INPUT, &[1])
        .map_err(crate::nets::NetsError::from)?;
    let loss = build_pretrain_loss(
        &mut gb,
        recon,
        &lead_inputs,
        &fusion.expert_mus,
        fusion.joint_mu,
        fusion.joint_var,
        weights,
        beta,
    )?;
    let graph = gb.finish(&[
        ("mse", loss.mse),
        ("kl", loss.kl),
        ("alignment", loss.alignment),
        ("total", loss.total),
        ("joint_mu", fusion.joint_mu),
        ("joint_var", fusion.joint_var),
        ("weights", fusion.weights),
        ("recon", recon),
    ]);
    Ok(PretrainGraph {
        graph,
        leads: leads.to_vec(),
        fusion,
        recon,
        loss,
    })
}
