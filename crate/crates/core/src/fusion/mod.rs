//! Two-level latent-expert fusion: a product-of-experts combines the lead
//! experts into a shared expert, then a gated mixture-of-experts blends the
//! lead experts plus the shared one into the joint latent, which is sampled
//! via the reparameterization trick.
//!
//! Everything exists twice: as plain functions over [`GaussianExpert`]
//! values (used by oracles, caching, and export) and as graph builders over
//! the diff engine (used by training). Tests pin the two routes together.

use thiserror::Error;

use crate::diff::{Bindings, CounterRng, EvalOpts, GraphBuilder, NodeId, Real, Tensor};
use crate::nets::{build_gating, NetsError, ParamStore, GATE_HIDDEN};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Nets(#[from] NetsError),
}

/// Variance floor applied to the mixture variance before any log or
/// division; expert collapse can drive it numerically to zero.
pub const MOE_VAR_FLOOR: f64 = 1e-8;

/// One diagonal-Gaussian latent expert.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianExpert<T> {
    pub mu: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> GaussianExpert<T> {
    pub fn new(mu: Vec<T>, var: Vec<T>) -> Result<Self, FusionError> {
        if mu.len() != var.len() {
            return Err(FusionError::Domain(format!(
                "mu length {} != var length {}",
                mu.len(),
                var.len()
            )));
        }
        let expert = GaussianExpert { mu, var };
        expert.check_var()?;
        Ok(expert)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn check_var(&self) -> Result<(), FusionError> {
        if self
            .var
            .iter()
            .any(|v| !(*v > T::zero()) || !v.is_finite())
        {
            return Err(FusionError::Domain("variance must be positive".into()));
        }
        Ok(())
    }
}

/// Joint fusion result: the expert list (leads then PoE), the gate weights,
/// the joint moments, and the sampled latent.
#[derive(Clone, Debug)]
pub struct FusionOutput<T> {
    pub experts: Vec<GaussianExpert<T>>,
    pub weights: Vec<T>,
    pub joint: GaussianExpert<T>,
    pub z: Vec<T>,
}

/// Precision-weighted product of diagonal Gaussians, elementwise:
/// var = (sum 1/var_m)^-1, mu = var * sum(mu_m / var_m).
pub fn poe_fuse<T: Real>(experts: &[GaussianExpert<T>]) -> Result<GaussianExpert<T>, FusionError> {
    if experts.is_empty() {
        return Err(FusionError::Domain("PoE of zero experts".into()));
    }
    let d = experts[0].dim();
    for e in experts {
        if e.dim() != d {
            return Err(FusionError::Domain("experts differ in dimension".into()));
        }
        e.check_var()?;
    }
    let mut precision = vec![T::zero(); d];
    let mut weighted_mu = vec![T::zero(); d];
    for e in experts {
        for i in 0..d {
            let p = T::one() / e.var[i];
            precision[i] += p;
            weighted_mu[i] += e.mu[i] * p;
        }
    }
    let var: Vec<T> = precision.iter().map(|&p| T::one() / p).collect();
    let mu: Vec<T> = weighted_mu
        .iter()
        .zip(&precision)
        .map(|(&m, &p)| m / p)
        .collect();
    GaussianExpert::new(mu, var)
}

/// Stable softmax of the gating logits.
pub fn gate_weights<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Moment-matched mixture, elementwise per latent dimension with one scalar
/// weight per expert:
/// mu = sum w_k mu_k; var = sum w_k (var_k + mu_k^2) - mu^2, floored.
pub fn moe_fuse<T: Real>(
    experts: &[GaussianExpert<T>],
    weights: &[T],
) -> Result<GaussianExpert<T>, FusionError> {
    if experts.is_empty() || experts.len() != weights.len() {
        return Err(FusionError::Domain(format!(
            "{} experts for {} weights",
            experts.len(),
            weights.len()
        )));
    }
    let simplex_gap = (T::one() - weights.iter().copied().sum::<T>()).abs();
    if weights.iter().any(|w| *w < T::zero()) || simplex_gap > T::of(1e-6) {
        return Err(FusionError::Domain("weights are not a simplex".into()));
    }
    let d = experts[0].dim();
    for e in experts {
        if e.dim() != d {
            return Err(FusionError::Domain("experts differ in dimension".into()));
        }
        e.check_var()?;
    }
    let mut mu = vec![T::zero(); d];
    for (e, &w) in experts.iter().zip(weights) {
        for i in 0..d {
            mu[i] += w * e.mu[i];
        }
    }
    let mut var = vec![T::zero(); d];
    for (e, &w) in experts.iter().zip(weights) {
        for i in 0..d {
            var[i] += w * (e.var[i] + e.mu[i] * e.mu[i]);
        }
    }
    let floor = T::of(MOE_VAR_FLOOR);
    for i in 0..d {
        var[i] = var[i] - mu[i] * mu[i];
        if var[i] < floor {
            var[i] = floor;
        }
    }
    GaussianExpert::new(mu, var)
}

/// z = mu + sigma * eps with eps drawn standard normal from the stream.
pub fn reparameterize<T: Real>(joint: &GaussianExpert<T>, rng: &mut CounterRng) -> Vec<T> {
    joint
        .mu
        .iter()
        .zip(&joint.var)
        .map(|(&m, &v)| m + v.sqrt() * T::of(rng.standard_normal()))
        .collect()
}

/// Full two-level fusion over any subset of lead experts: PoE first, then
/// the gated mixture over leads + PoE, then a reparameterized sample.
/// Gating runs the shared MLP from `params` (`gate.*` tensors).
pub fn hime_forward<T: Real>(
    lead_experts: &[GaussianExpert<T>],
    params: &ParamStore<T>,
    rng: &mut CounterRng,
) -> Result<FusionOutput<T>, FusionError> {
    if lead_experts.is_empty() {
        return Err(FusionError::Domain("no lead experts".into()));
    }
    let shared = poe_fuse(lead_experts)?;
    let mut experts = lead_experts.to_vec();
    experts.push(shared);
    let logits = gating_logits(params, &experts)?;
    let weights = gate_weights(&logits);
    let joint = moe_fuse(&experts, &weights)?;
    let z = reparameterize(&joint, rng);
    Ok(FusionOutput {
        experts,
        weights,
        joint,
        z,
    })
}

/// Value-level gating MLP (shared weights), one logit per expert.
pub fn gating_logits<T: Real>(
    params: &ParamStore<T>,
    experts: &[GaussianExpert<T>],
) -> Result<Vec<T>, FusionError> {
    let d = experts[0].dim();
    let mut gb = GraphBuilder::<T>::new();
    let mut mus = Vec::with_capacity(experts.len());
    for k in 0..experts.len() {
        mus.push(
            gb.input(&format!("mu.{k}"), &[d])
                .map_err(NetsError::from)?,
        );
    }
    let logits = build_gating(&mut gb, &mus, d)?;
    let graph = gb.finish(&[("logits", logits)]);
    let mut inputs = Bindings::new();
    for (k, e) in experts.iter().enumerate() {
        inputs.insert(
            format!("mu.{k}"),
            Tensor::new(vec![d], e.mu.clone()).map_err(NetsError::from)?,
        );
    }
    let exec = graph
        .forward(params.bindings(), &inputs, EvalOpts::default())
        .map_err(NetsError::from)?;
    Ok(exec
        .value(logits)
        .expect("computed")
        .data()
        .to_vec())
}

/// Graph-side fusion nodes.
#[derive(Clone, Debug)]
pub struct FusionNodes {
    /// Expert means, leads then PoE.
    pub expert_mus: Vec<NodeId>,
    pub expert_vars: Vec<NodeId>,
    pub weights: NodeId,
    pub joint_mu: NodeId,
    pub joint_var: NodeId,
    /// Sampled latent; present only when an `eps` input was wired.
    pub z: Option<NodeId>,
}

/// Builds the two-level fusion into a graph. `experts` are (mu, var) node
/// pairs per lead; when `eps_input` names an input, a reparameterized
/// sample node is produced (gradient flows through mu and sigma, not eps).
pub fn build_fusion<T: Real>(
    gb: &mut GraphBuilder<T>,
    experts: &[(NodeId, NodeId)],
    latent_dim: usize,
    eps_input: Option<&str>,
) -> Result<FusionNodes, FusionError> {
    if experts.is_empty() {
        return Err(FusionError::Domain("no lead experts".into()));
    }
    let mut build = || -> Result<FusionNodes, crate::diff::DiffError> {
        let one = gb.scalar(1.0);
        // PoE: precision sums.
        let mut precision_sum: Option<NodeId> = None;
        let mut weighted_mu_sum: Option<NodeId> = None;
        for &(mu, var) in experts {
            let p = gb.div(one, var)?;
            let wm = gb.mul(mu, p)?;
            precision_sum = Some(match precision_sum {
                None => p,
                Some(acc) => gb.add(acc, p)?,
            });
            weighted_mu_sum = Some(match weighted_mu_sum {
                None => wm,
                Some(acc) => gb.add(acc, wm)?,
            });
        }
        let precision_sum = precision_sum.expect("nonempty");
        let weighted_mu_sum = weighted_mu_sum.expect("nonempty");
        let poe_var = gb.div(one, precision_sum)?;
        let poe_mu = gb.div(weighted_mu_sum, precision_sum)?;

        let mut expert_mus: Vec<NodeId> = experts.iter().map(|&(mu, _)| mu).collect();
        let mut expert_vars: Vec<NodeId> = experts.iter().map(|&(_, var)| var).collect();
        expert_mus.push(poe_mu);
        expert_vars.push(poe_var);

        let logits = build_gating(gb, &expert_mus, latent_dim).map_err(|e| match e {
            NetsError::Diff(d) => d,
            other => crate::diff::DiffError::Contract(other.to_string()),
        })?;
        let weights = gb.softmax(logits)?;

        // MoE moments with one scalar weight per expert.
        let mut joint_mu: Option<NodeId> = None;
        let mut second_moment: Option<NodeId> = None;
        for (k, (&mu, &var)) in expert_mus.iter().zip(&expert_vars).enumerate() {
            let w_k = gb.slice(weights, k, 1)?;
            let w_mu = gb.mul(mu, w_k)?;
            joint_mu = Some(match joint_mu {
                None => w_mu,
                Some(acc) => gb.add(acc, w_mu)?,
            });
            let mu_sq = gb.mul(mu, mu)?;
            let vm = gb.add(var, mu_sq)?;
            let w_vm = gb.mul(vm, w_k)?;
            second_moment = Some(match second_moment {
                None => w_vm,
                Some(acc) => gb.add(acc, w_vm)?,
            });
        }
        let joint_mu = joint_mu.expect("nonempty");
        let second_moment = second_moment.expect("nonempty");
        let joint_mu_sq = gb.mul(joint_mu, joint_mu)?;
        let var_raw = gb.sub(second_moment, joint_mu_sq)?;
        let joint_var = gb.clamp(var_raw, MOE_VAR_FLOOR, f64::INFINITY);

        let z = match eps_input {
            None => None,
            Some(name) => {
                let eps = gb.input(name, &[latent_dim])?;
                let sigma = gb.sqrt(joint_var);
                let scaled = gb.mul(sigma, eps)?;
                Some(gb.add(joint_mu, scaled)?)
            }
        };

        Ok(FusionNodes {
            expert_mus,
            expert_vars,
            weights,
            joint_mu,
            joint_var,
            z,
        })
    };
    build().map_err(|e| FusionError::Nets(NetsError::Diff(e)))
}

/// Gate parameter shapes for value-level stores built outside a graph.
pub fn gate_param_shapes(latent_dim: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        ("gate.fc0.w".into(), vec![GATE_HIDDEN, latent_dim]),
        ("gate.fc0.b".into(), vec![GATE_HIDDEN]),
        ("gate.fc1.w".into(), vec![1, GATE_HIDDEN]),
        ("gate.fc1.b".into(), vec![1]),
    ]
}
