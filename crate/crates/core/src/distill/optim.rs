//! Adam optimizer over a [`ParamSet`].

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::model::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let m = params.entries().iter().map(|e| vec![0.0; e.values.len()]).collect();
        let v = params.entries().iter().map(|e| vec![0.0; e.values.len()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m,
            v,
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Apply one update from per-entry gradients aligned with `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter mismatch");
        self.t += 1;
        let bc1 = 1.0 - fmath::powf(self.beta1, self.t as f64);
        let bc2 = 1.0 - fmath::powf(self.beta2, self.t as f64);
        for (idx, entry) in params.entries_mut().iter_mut().enumerate() {
            let g = &grads[idx];
            assert_eq!(g.len(), entry.values.len(), "gradient shape mismatch");
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                entry.values[i] -= self.lr * m_hat / (fmath::sqrt(v_hat) + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut params = ParamSet::new();
        params.add("a", alloc::vec![2], alloc::vec![1.0, -2.0]);
        let before = params.to_flat();
        let mut opt = Adam::new(0.0, &params);
        opt.step(&mut params, &[alloc::vec![0.3, -0.7]]);
        assert_eq!(params.to_flat(), before);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut params = ParamSet::new();
        params.add("x", alloc::vec![1], alloc::vec![5.0]);
        let mut opt = Adam::new(0.05, &params);
        for _ in 0..500 {
            let x = params.entries()[0].values[0];
            opt.step(&mut params, &[alloc::vec![2.0 * x]]);
        }
        assert!(params.entries()[0].values[0].abs() < 0.1);
    }
}
