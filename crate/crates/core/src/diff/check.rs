//! Finite-difference verification oracle for graph gradients.

use super::graph::{Bindings, EvalOpts, Graph};
use super::rng::CounterRng;
use super::tensor::Real;
use super::DiffError;

#[derive(Clone, Debug)]
pub struct FiniteDiffOpts {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per parameter tensor
    /// (seeded sample); `None` sweeps every coordinate.
    pub max_coords_per_tensor: Option<usize>,
    pub sample_seed: u64,
    pub eval: EvalOpts,
    /// Coordinates whose analytic gradient is structurally zero (e.g. a
    /// bias ahead of a softmax, which is shift-invariant) cannot meet the
    /// relative tolerance: the central difference is pure rounding noise,
    /// `~ulp(loss)/2h`, while the denominator floors at 1e-8. With
    /// `Some((analytic_atol, numeric_atol))`, a coordinate with
    /// `|analytic| <= analytic_atol` instead asserts
    /// `|numeric| <= numeric_atol` and is excluded from the relative max.
    pub zero_grad_atol: Option<(f64, f64)>,
}

impl Default for FiniteDiffOpts {
    fn default() -> Self {
        FiniteDiffOpts {
            step: 1e-5,
            max_coords_per_tensor: None,
            sample_seed: 0,
            eval: EvalOpts::default(),
            zero_grad_atol: None,
        }
    }
}

/// Max over checked parameter coordinates of
/// `|analytic - (f(p+h) - f(p-h)) / 2h| / (|analytic| + 1e-8)`.
///
/// Meant for the 64-bit scalar type; 32-bit precision has no headroom
/// for `h = 1e-5`.
pub fn finite_diff_check<T: Real>(
    graph: &Graph<T>,
    params: &Bindings<T>,
    inputs: &Bindings<T>,
    loss_output: &str,
    opts: FiniteDiffOpts,
) -> Result<f64, DiffError> {
    let loss = graph.output(loss_output)?;
    let exec = graph.forward(params, inputs, opts.eval)?;
    let analytic = graph
        .backward(params, inputs, &exec, loss)?
        .into_param_grads(graph);

    let eval_loss = |p: &Bindings<T>| -> Result<f64, DiffError> {
        let exec = graph.forward(p, inputs, opts.eval)?;
        Ok(exec
            .value(loss)
            .ok_or_else(|| DiffError::Contract("loss not computed".into()))?
            .item()?
            .as_f64())
    };

    let h = opts.step;
    let mut perturbed = params.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let n = params.get(&name).expect("listed").len();
        let coords: Vec<usize> = match opts.max_coords_per_tensor {
            Some(m) if m < n => {
                let mut rng = CounterRng::new(opts.sample_seed).derive_str(&name);
                let mut picked: Vec<usize> = (0..m).map(|_| rng.below(n)).collect();
                picked.sort_unstable();
                picked.dedup();
                picked
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let base = params.get(&name).expect("listed").data()[i].as_f64();
            perturbed.get_mut(&name).expect("listed").data_mut()[i] = T::of(base + h);
            let up = eval_loss(&perturbed)?;
            perturbed.get_mut(&name).expect("listed").data_mut()[i] = T::of(base - h);
            let down = eval_loss(&perturbed)?;
            perturbed.get_mut(&name).expect("listed").data_mut()[i] = T::of(base);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic
                .get(&name)
                .expect("param grad")
                .data()[i]
                .as_f64();
            if let Some((analytic_atol, numeric_atol)) = opts.zero_grad_atol {
                if a.abs() <= analytic_atol {
                    if numeric.abs() > numeric_atol {
                        return Err(DiffError::Contract(format!(
                            "{name}[{i}]: analytic gradient {a:e} is zero but \
                             central difference is {numeric:e}"
                        )));
                    }
                    continue;
                }
            }
            let rel = (a - numeric).abs() / (a.abs() + 1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
