//! Adam optimizer over a [`ParamStore`].

use super::params::ParamStore;
use super::tensor::Tensor;

/// Adam with bias correction. One instance per parameter store; moment
/// buffers are keyed by insertion order, so the store must not grow after
/// the optimizer is built.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, store: &ParamStore) -> Self {
        let m: Vec<Tensor> = store
            .ids()
            .map(|id| {
                let t = store.value(id);
                Tensor::zeros(t.rows(), t.cols())
            })
            .collect();
        let v = m.clone();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    /// Apply one update from the gradients currently in the store.
    /// Does not zero the gradients; the caller owns that contract.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let grad = store.grad(id).clone();
            let m = &mut self.m[idx(id)];
            let v = &mut self.v[idx(id)];
            for ((mi, vi), g) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut().iter_mut())
                .zip(grad.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
            }
            let value = store.value_mut(id);
            for ((p, mi), vi) in value.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn idx(id: super::params::ParamId) -> usize {
    id.0
}
