use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use crate::diff::{Bindings, CounterRng, Graph, Real, Tensor};

use super::NetsError;

/// Named, shape-tagged parameter tensors with deterministic (sorted-name)
/// iteration; the serializable checkpoint unit. Frozen names are runtime
/// state and are not serialized.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    tensors: Bindings<T>,
    frozen: BTreeSet<String>,
}

impl<T: Real> ParamStore<T> {
    pub fn new(tensors: Bindings<T>) -> Self {
        ParamStore {
            tensors,
            frozen: BTreeSet::new(),
        }
    }

    /// Kaiming-uniform fan-in initialization for every parameter leaf of a
    /// graph: weights (ndim >= 2) drawn from U(-b, b) with
    /// b = sqrt(6 / fan_in), fan_in = product of trailing dimensions;
    /// vectors (biases) zero. Streams are derived per tensor name, so the
    /// result is independent of declaration order.
    pub fn init_for(graph: &Graph<T>, seed: u64) -> Self {
        let root = CounterRng::new(seed);
        let mut tensors = Bindings::new();
        for (name, shape) in graph.param_shapes() {
            tensors.insert(name.clone(), init_tensor(&root, name, shape));
        }
        ParamStore::new(tensors)
    }

    pub fn bindings(&self) -> &Bindings<T> {
        &self.tensors
    }

    pub fn bindings_mut(&mut self) -> &mut Bindings<T> {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name, tensor);
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.frozen.remove(name);
        self.tensors.remove(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.names().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn freeze_matching(&mut self, prefix: &str) {
        let names: Vec<String> = self
            .tensors
            .names()
            .filter(|n| n.starts_with(prefix))
            .cloned()
            .collect();
        self.frozen.extend(names);
    }

    pub fn unfreeze_matching(&mut self, prefix: &str) {
        self.frozen.retain(|n| !n.starts_with(prefix));
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> impl Iterator<Item = &String> {
        self.frozen.iter()
    }

    /// SHA-256 over (name, shape, value bits) of the selected tensors;
    /// equal digests mean bitwise-equal tensors.
    pub fn digest_matching(&self, filter: impl Fn(&str) -> bool) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (name, tensor) in self.tensors.iter() {
            if !filter(name) {
                continue;
            }
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            for d in tensor.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in tensor.data() {
                hasher.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    pub fn digest_frozen(&self) -> [u8; 32] {
        self.digest_matching(|n| self.frozen.contains(n))
    }

    /// Shape-checks the store against a graph's parameter leaves.
    pub fn validate_against(&self, graph: &Graph<T>) -> Result<(), NetsError> {
        for (name, shape) in graph.param_shapes() {
            match self.tensors.get(name) {
                None => return Err(NetsError::Checkpoint(format!("missing tensor {name}"))),
                Some(t) if t.shape() != shape => {
                    return Err(NetsError::Checkpoint(format!(
                        "tensor {name}: stored {:?}, graph wants {:?}",
                        t.shape(),
                        shape
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn init_tensor<T: Real>(root: &CounterRng, name: &str, shape: &[usize]) -> Tensor<T> {
    if shape.len() < 2 {
        return Tensor::zeros(shape);
    }
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = root.derive_str(name);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.uniform_in(-bound, bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}
