//! Batch-level gradient accumulation with a fixed chunk plan: chunks run in
//! parallel, samples accumulate in order within a chunk, and chunk partials
//! merge in chunk order, so the result is bitwise independent of thread
//! count and of the `parallel` feature.

use std::collections::BTreeMap;

use crate::diff::{Bindings, DiffError, EvalOpts, Graph, Real, Tensor};
use crate::exec;
use crate::nets::ParamStore;

/// Summed (not averaged) losses and gradients over a batch.
pub struct BatchResult<T> {
    /// Per tracked output: sum of the scalar over the batch.
    pub loss_sums: BTreeMap<String, f64>,
    /// Per parameter: sum of gradients over the batch.
    pub grad_sums: Bindings<T>,
    pub count: usize,
}

impl<T: Real> BatchResult<T> {
    pub fn mean_loss(&self, name: &str) -> f64 {
        self.loss_sums[name] / self.count as f64
    }

    /// Gradients of the batch-mean loss.
    pub fn mean_grads(mut self) -> Bindings<T> {
        let inv = T::of(1.0 / self.count as f64);
        for (_, g) in self.grad_sums.iter_mut() {
            for v in g.data_mut() {
                *v = *v * inv;
            }
        }
        self.grad_sums
    }
}

fn run_chunk<T: Real>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &[Bindings<T>],
    opts: &dyn Fn(usize) -> EvalOpts,
    range: std::ops::Range<usize>,
    loss_output: &str,
    track: &[&str],
) -> Result<BatchResult<T>, DiffError> {
    let loss = graph.output(loss_output)?;
    let mut loss_sums: BTreeMap<String, f64> =
        track.iter().map(|n| (n.to_string(), 0.0)).collect();
    let mut grad_sums: Option<Bindings<T>> = None;
    let count = range.len();
    for i in range {
        let exec = graph.forward(params.bindings(), &inputs[i], opts(i))?;
        for name in track {
            let id = graph.output(name)?;
            let v = exec
                .value(id)
                .ok_or_else(|| DiffError::Contract(format!("output {name} not computed")))?
                .item()?
                .as_f64();
            *loss_sums.get_mut(*name).expect("tracked") += v;
        }
        let grads = graph
            .backward(params.bindings(), &inputs[i], &exec, loss)?
            .into_param_grads(graph);
        match &mut grad_sums {
            None => grad_sums = Some(grads),
            Some(acc) => {
                for (name, g) in grads.iter() {
                    acc.get_mut(name).expect("same graph").add_assign(g);
                }
            }
        }
    }
    Ok(BatchResult {
        loss_sums,
        grad_sums: grad_sums.unwrap_or_else(Bindings::new),
        count,
    })
}

fn merge<T: Real>(
    parts: Vec<Result<BatchResult<T>, DiffError>>,
    track: &[&str],
) -> Result<BatchResult<T>, DiffError> {
    let mut total = BatchResult {
        loss_sums: track.iter().map(|n| (n.to_string(), 0.0)).collect(),
        grad_sums: Bindings::new(),
        count: 0,
    };
    for part in parts {
        let part = part?;
        for (name, v) in &part.loss_sums {
            *total.loss_sums.get_mut(name).expect("tracked") += v;
        }
        if total.grad_sums.is_empty() {
            total.grad_sums = part.grad_sums;
        } else {
            for (name, g) in part.grad_sums.iter() {
                total.grad_sums.get_mut(name).expect("same graph").add_assign(g);
            }
        }
        total.count += part.count;
    }
    Ok(total)
}

/// Forward + backward over a batch of per-sample input bindings;
/// `loss_output` is differentiated, `track` outputs are summed for logging.
pub fn batch_gradients<T: Real, F>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &[Bindings<T>],
    opts: F,
    loss_output: &str,
    track: &[&str],
    chunk_size: usize,
) -> Result<BatchResult<T>, DiffError>
where
    F: Fn(usize) -> EvalOpts + Sync + Send,
{
    let parts = exec::map_chunks(inputs.len(), chunk_size, |range| {
        run_chunk(graph, params, inputs, &opts, range, loss_output, track)
    });
    merge(parts, track)
}

/// Sequential twin of [`batch_gradients`]; identical results by
/// construction.
pub fn batch_gradients_seq<T: Real, F>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &[Bindings<T>],
    opts: F,
    loss_output: &str,
    track: &[&str],
    chunk_size: usize,
) -> Result<BatchResult<T>, DiffError>
where
    F: Fn(usize) -> EvalOpts + Sync + Send,
{
    let parts = exec::map_chunks_seq(inputs.len(), chunk_size, |range| {
        run_chunk(graph, params, inputs, &opts, range, loss_output, track)
    });
    merge(parts, track)
}

/// Forward-only batch evaluation of tracked scalar outputs (validation).
pub fn batch_losses<T: Real, F>(
    graph: &Graph<T>,
    params: &ParamStore<T>,
    inputs: &[Bindings<T>],
    opts: F,
    track: &[&str],
    chunk_size: usize,
) -> Result<BTreeMap<String, f64>, DiffError>
where
    F: Fn(usize) -> EvalOpts + Sync + Send,
{
    let parts = exec::map_chunks(inputs.len(), chunk_size, |range| {
        let mut sums: BTreeMap<String, f64> =
            track.iter().map(|n| (n.to_string(), 0.0)).collect();
        for i in range {
            let exec = graph.forward(params.bindings(), &inputs[i], opts(i))?;
            for name in track {
                let id = graph.output(name)?;
                *sums.get_mut(*name).expect("tracked") +=
                    exec.value(id).expect("computed").item()?.as_f64();
            }
        }
        Ok::<_, DiffError>(sums)
    });
    let mut total: BTreeMap<String, f64> = track.iter().map(|n| (n.to_string(), 0.0)).collect();
    let n = inputs.len().max(1) as f64;
    for part in parts {
        for (name, v) in part? {
            *total.get_mut(&name).expect("tracked") += v;
        }
    }
    for v in total.values_mut() {
        *v /= n;
    }
    Ok(total)
}

/// Flat sample tensor in the graph's scalar type.
pub fn tensor_from_f64<T: Real>(values: &[f64]) -> Tensor<T> {
    Tensor::new(vec![values.len()], values.iter().map(|&v| T::of(v)).collect())
        .expect("consistent shape")
}
