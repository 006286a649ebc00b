//! AdamW: decoupled weight decay, then the bias-corrected Adam update.

use crate::diff::{Bindings, Real, Tensor};
use crate::nets::ParamStore;

#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Bindings<T>,
    second_moment: Bindings<T>,
    step: u64,
}

impl<T: Real> Default for AdamW<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> AdamW<T> {
    pub fn new() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Bindings::new(),
            second_moment: Bindings::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over every non-frozen parameter with a gradient.
    /// Frozen parameters get no update and no accumulator state.
    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &Bindings<T>,
        lr: f64,
        weight_decay: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_m_b1, one_m_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let lr_t = T::of(lr);
        let wd = T::of(weight_decay);
        let eps = T::of(self.epsilon);
        let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));

        let names: Vec<String> = params.names();
        for name in names {
            if params.is_frozen(&name) {
                continue;
            }
            let Some(grad) = grads.get(&name) else {
                continue;
            };
            let shape = grad.shape().to_vec();
            if !self.first_moment.contains(&name) {
                self.first_moment.insert(name.clone(), Tensor::zeros(&shape));
                self.second_moment.insert(name.clone(), Tensor::zeros(&shape));
            }
            let m = self.first_moment.get_mut(&name).expect("just inserted");
            let v = self.second_moment.get_mut(&name).expect("just inserted");
            let p = params
                .bindings_mut()
                .get_mut(&name)
                .expect("listed")
                .data_mut();
            let g = grad.data();
            let m = m.data_mut();
            let v = v.data_mut();
            for i in 0..p.len() {
                // Decoupled decay first, then the Adam direction.
                p[i] = p[i] - lr_t * wd * p[i];
                m[i] = b1 * m[i] + one_m_b1 * g[i];
                v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
                let m_hat = m[i] * inv_bc1;
                let v_hat = v[i] * inv_bc2;
                p[i] = p[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Scales gradients down to the given global L2 norm when they exceed it;
/// returns the pre-clip norm.
pub fn clip_global_norm<T: Real>(grads: &mut Bindings<T>, max_norm: f64) -> f64 {
    let mut sum_sq = 0.0f64;
    for (_, g) in grads.iter() {
        for v in g.data() {
            let x = v.as_f64();
            sum_sq += x * x;
        }
    }
    let norm = sum_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::of(max_norm / norm);
        for (_, g) in grads.iter_mut() {
            for v in g.data_mut() {
                *v = *v * scale;
            }
        }
    }
    norm
}
