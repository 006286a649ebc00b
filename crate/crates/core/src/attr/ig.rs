//! Integrated gradients: midpoint-Riemann approximation of the path
//! integral of input gradients from a baseline to the input, scaled by
//! (input - baseline). Deterministic; dropout stays off.

use std::collections::BTreeMap;

use crate::diff::{Bindings, EvalOpts, Graph, NodeId, Real, Tensor};
use crate::eval::FinetunedModel;
use crate::signal::EcgRecord;

use super::AttrError;

/// Attributions of `target` (a scalar node) with respect to the named
/// inputs; any other inputs in the bindings are held fixed at their input
/// value. Accumulation is in f64 regardless of the graph scalar type.
pub fn integrated_gradients_graph<T: Real>(
    graph: &Graph<T>,
    params: &Bindings<T>,
    target: NodeId,
    input: &Bindings<T>,
    baseline: &Bindings<T>,
    attr_names: &[String],
    steps: usize,
) -> Result<BTreeMap<String, Vec<f64>>, AttrError> {
    if steps == 0 {
        return Err(AttrError::Domain("steps must be >= 1".into()));
    }
    for name in attr_names {
        let x = input
            .get(name)
            .ok_or_else(|| AttrError::Domain(format!("missing input {name}")))?;
        let b = baseline
            .get(name)
            .ok_or_else(|| AttrError::Domain(format!("missing baseline {name}")))?;
        if x.shape() != b.shape() {
            return Err(AttrError::Domain(format!(
                "baseline shape differs for {name}"
            )));
        }
    }
    let mut grad_sums: BTreeMap<String, Vec<f64>> = attr_names
        .iter()
        .map(|n| (n.clone(), vec![0.0; input.get(n).expect("checked").len()]))
        .collect();
    let mut point = input.clone();
    for s in 0..steps {
        let frac = T::of((s as f64 + 0.5) / steps as f64);
        for name in attr_names {
            let x = input.get(name).expect("checked").data();
            let b = baseline.get(name).expect("checked").data();
            let blend: Vec<T> = x
                .iter()
                .zip(b)
                .map(|(&xv, &bv)| bv + frac * (xv - bv))
                .collect();
            *point.get_mut(name).expect("cloned from input") =
                Tensor::new(input.get(name).expect("checked").shape().to_vec(), blend)
                    .expect("same shape");
        }
        let exec = graph.forward(params, &point, EvalOpts::default())?;
        let grads = graph.backward(params, &point, &exec, target)?;
        for name in attr_names {
            let sums = grad_sums.get_mut(name).expect("prefilled");
            if let Some(g) = grads.input_grad(graph, name) {
                for (acc, gv) in sums.iter_mut().zip(g.data()) {
                    *acc += gv.as_f64();
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for name in attr_names {
        let x = input.get(name).expect("checked").data();
        let b = baseline.get(name).expect("checked").data();
        let sums = &grad_sums[name];
        let alpha: Vec<f64> = x
            .iter()
            .zip(b)
            .zip(sums)
            .map(|((&xv, &bv), &gsum)| (xv.as_f64() - bv.as_f64()) * gsum / steps as f64)
            .collect();
        out.insert(name.clone(), alpha);
    }
    Ok(out)
}

/// Per-lead attribution of one record against an all-zeros baseline
/// (the standardized-signal mean). Targets the predicted class unless one
/// is given; the attribution target is the class logit.
pub fn integrated_gradients(
    model: &FinetunedModel,
    record: &EcgRecord,
    target_class: Option<usize>,
    steps: usize,
) -> Result<Vec<(String, Vec<f64>)>, AttrError> {
    let inputs = model.record_inputs(record)?;
    let class = match target_class {
        Some(c) if c < 2 => c,
        Some(c) => return Err(AttrError::Domain(format!("class {c} out of range"))),
        None => {
            let logits = model.score(record)?;
            usize::from(logits[1] > logits[0])
        }
    };
    let mut baseline = Bindings::new();
    let names: Vec<String> = model.leads.iter().map(|l| format!("x.{l}")).collect();
    for name in &names {
        baseline.insert(
            name.clone(),
            Tensor::zeros(inputs.get(name).expect("record inputs").shape()),
        );
    }
    let alphas = integrated_gradients_graph(
        model.graph(),
        model.params.bindings(),
        model.class_logit_node(class),
        &inputs,
        &baseline,
        &names,
        steps,
    )?;
    Ok(model
        .leads
        .iter()
        .map(|lead| (lead.clone(), alphas[&format!("x.{lead}")].clone()))
        .collect())
}
