//! Training losses: per-lead weighted reconstruction MSE, KL to the
//! standard Gaussian, the latent-alignment penalty, the combined
//! pre-training objective, and classification cross-entropy.
//!
//! Reductions: mean over time within a lead, sum over leads, sum over
//! latent dimensions for KL, mean over batch (applied by the trainer).
//! Value-level functions compute per-sample losses; graph builders wire the
//! same formulas into a compute graph, and tests pin the two together.

use thiserror::Error;

use crate::diff::{DiffError, GraphBuilder, NodeId, Real};
use crate::fusion::GaussianExpert;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Loss hyperparameters: per-lead reconstruction weights, KL anneal factor
/// range, and the alignment strength.
#[derive(Clone, Debug)]
pub struct LossWeights {
    pub lambda: Vec<f64>,
    pub gamma: f64,
}

/// Per-lead reconstruction weights for the standard 12-lead order
/// (I, II, III, aVR, aVL, aVF, V1..V6).
pub const LAMBDA_12: [f64; 12] = [5.0, 10.0, 1.0, 5.0, 1.0, 1.0, 1.0, 10.0, 5.0, 1.0, 1.0, 5.0];

pub const GAMMA_DEFAULT: f64 = 0.1;

impl LossWeights {
    pub fn new(lambda: Vec<f64>, gamma: f64) -> Result<Self, LossError> {
        if lambda.iter().any(|l| *l <= 0.0) || gamma <= 0.0 {
            return Err(LossError::Domain(
                "lambda and gamma must be positive".into(),
            ));
        }
        Ok(LossWeights { lambda, gamma })
    }

    /// Table defaults for a lead set: the 12-lead weights when the set is
    /// exactly the standard one (any order), otherwise all ones.
    pub fn default_for(leads: &[String]) -> Self {
        let lambda = leads
            .iter()
            .map(|lead| {
                crate::signal::LEADS_12
                    .iter()
                    .position(|l| l == lead)
                    .filter(|_| leads.len() == 12)
                    .map(|i| LAMBDA_12[i])
                    .unwrap_or(1.0)
            })
            .collect();
        LossWeights {
            lambda,
            gamma: GAMMA_DEFAULT,
        }
    }
}

/// sum_m lambda_m * mean_t (recon_t - target_t)^2 for one sample.
pub fn weighted_mse<T: Real>(
    recon: &[&[T]],
    target: &[&[T]],
    lambda: &[f64],
) -> Result<T, LossError> {
    if recon.len() != target.len() || recon.len() != lambda.len() {
        return Err(LossError::Shape(format!(
            "{} recon, {} target, {} lambda",
            recon.len(),
            target.len(),
            lambda.len()
        )));
    }
    let mut total = T::zero();
    for ((r, t), &lm) in recon.iter().zip(target).zip(lambda) {
        if r.len() != t.len() || r.is_empty() {
            return Err(LossError::Shape("lead length mismatch".into()));
        }
        let mse: T = r
            .iter()
            .zip(t.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            / T::of(r.len() as f64);
        total += T::of(lm) * mse;
    }
    Ok(total)
}

/// KL( N(mu, var) || N(0, I) ) summed over dimensions:
/// sum_i (mu_i^2 + var_i - ln var_i - 1) / 2.
pub fn kl_standard_normal<T: Real>(joint: &GaussianExpert<T>) -> Result<T, LossError> {
    if joint.var.iter().any(|v| !(*v > T::zero())) {
        return Err(LossError::Domain("variance must be positive".into()));
    }
    let half = T::of(0.5);
    Ok(joint
        .mu
        .iter()
        .zip(&joint.var)
        .map(|(&m, &v)| half * (m * m + v - v.ln() - T::one()))
        .sum())
}

/// gamma * (1/N) * sum_k |mu_k - joint_mu|^2 over the N experts
/// (leads + PoE).
pub fn alignment_loss<T: Real>(
    expert_mus: &[&[T]],
    joint_mu: &[T],
    gamma: f64,
) -> Result<T, LossError> {
    if expert_mus.is_empty() {
        return Err(LossError::Shape("no experts".into()));
    }
    let mut total = T::zero();
    for mu in expert_mus {
        if mu.len() != joint_mu.len() {
            return Err(LossError::Shape("expert dimension mismatch".into()));
        }
        total += mu
            .iter()
            .zip(joint_mu)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>();
    }
    Ok(T::of(gamma) * total / T::of(expert_mus.len() as f64))
}

/// mse + beta * kl + alignment.
pub fn total_pretrain_loss<T: Real>(mse: T, kl: T, alignment: T, beta: f64) -> T {
    mse + T::of(beta) * kl + alignment
}

/// Numerically stable -log softmax(logits)[label].
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<T, LossError> {
    if label >= logits.len() {
        return Err(LossError::Domain(format!(
            "label {label} for {} logits",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(LossError::Domain("non-finite logits".into()));
    }
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let log_sum: T = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    Ok(log_sum + (max - logits[label]))
}

/// Graph nodes of the combined pre-training objective.
#[derive(Clone, Copy, Debug)]
pub struct PretrainLossNodes {
    pub mse: NodeId,
    pub kl: NodeId,
    pub alignment: NodeId,
    /// mse + beta * kl + alignment; beta is the `beta` graph input.
    pub total: NodeId,
}

/// Wires Eq.-style losses into the graph: per-lead weighted MSE between
/// `recon` and the lead target inputs, KL of the joint to the unit
/// Gaussian, and the alignment penalty over the expert means.
pub fn build_pretrain_loss<T: Real>(
    gb: &mut GraphBuilder<T>,
    recon: NodeId,
    targets: &[NodeId],
    expert_mus: &[NodeId],
    joint_mu: NodeId,
    joint_var: NodeId,
    weights: &LossWeights,
    beta: NodeId,
) -> Result<PretrainLossNodes, LossError> {
    if targets.len() != weights.lambda.len() {
        return Err(LossError::Shape(format!(
            "{} targets, {} lambda",
            targets.len(),
            weights.lambda.len()
        )));
    }
    // MSE: sum_m lambda_m * mean((recon - x_m)^2)
    let mut mse: Option<NodeId> = None;
    for (&target, &lm) in targets.iter().zip(&weights.lambda) {
        let diff = gb.sub(recon, target)?;
        let sq = gb.mul(diff, diff)?;
        let mean = gb.mean(sq);
        let lam = gb.scalar(lm);
        let term = gb.mul(mean, lam)?;
        mse = Some(match mse {
            None => term,
            Some(acc) => gb.add(acc, term)?,
        });
    }
    let mse = mse.ok_or_else(|| LossError::Shape("no leads".into()))?;

    // KL: 0.5 * sum(mu^2 + var - ln var - 1)
    let mu_sq = gb.mul(joint_mu, joint_mu)?;
    let ln_var = gb.log(joint_var);
    let one = gb.scalar(1.0);
    let t = gb.add(mu_sq, joint_var)?;
    let t = gb.sub(t, ln_var)?;
    let t = gb.sub(t, one)?;
    let s = gb.sum(t);
    let half = gb.scalar(0.5);
    let kl = gb.mul(s, half)?;

    // Alignment: gamma/N * sum_k |mu_k - joint_mu|^2
    let mut align: Option<NodeId> = None;
    for &mu in expert_mus {
        let diff = gb.sub(mu, joint_mu)?;
        let sq = gb.mul(diff, diff)?;
        let s = gb.sum(sq);
        align = Some(match align {
            None => s,
            Some(acc) => gb.add(acc, s)?,
        });
    }
    let align_sum = align.ok_or_else(|| LossError::Shape("no experts".into()))?;
    let scale = gb.scalar(weights.gamma / expert_mus.len() as f64);
    let alignment = gb.mul(align_sum, scale)?;

    let beta_kl = gb.mul(kl, beta)?;
    let t = gb.add(mse, beta_kl)?;
    let total = gb.add(t, alignment)?;
    Ok(PretrainLossNodes {
        mse,
        kl,
        alignment,
        total,
    })
}

/// -sum(onehot * log softmax(logits)) via the stable log-sum-exp identity;
/// `onehot` is a `[2]` input carrying the label.
pub fn build_cross_entropy<T: Real>(
    gb: &mut GraphBuilder<T>,
    logits: NodeId,
    onehot: NodeId,
) -> Result<NodeId, LossError> {
    let probs = gb.softmax(logits)?;
    let log_probs = gb.log(probs);
    let picked = gb.mul(log_probs, onehot)?;
    let s = gb.sum(picked);
    let neg = gb.scalar(-1.0);
    Ok(gb.mul(s, neg)?)
}

pub fn onehot2<T: Real>(label: usize) -> crate::diff::Tensor<T> {
    let mut data = vec![T::zero(); 2];
    data[label] = T::one();
    crate::diff::Tensor::new(vec![2], data).expect("fixed shape")
}
