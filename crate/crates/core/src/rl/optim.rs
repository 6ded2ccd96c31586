use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adaptive-moment gradient descent with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub weight_decay: F,
    t: u64,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(n_params: usize, learning_rate: F, weight_decay: F) -> Self {
        AdamW {
            learning_rate,
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            weight_decay,
            t: 0,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// `params -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * params)`.
    pub fn step(&mut self, params: &mut [F], grad: &[F]) {
        assert_eq!(params.len(), self.m.len(), "optimizer sized for a different model");
        assert_eq!(grad.len(), self.m.len(), "gradient sized for a different model");
        self.t += 1;
        let one = F::one();
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}
