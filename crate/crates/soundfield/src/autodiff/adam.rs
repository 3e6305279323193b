//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Optimizer hyperparameters. Defaults: lr 1e-4, β₁ 0.9, β₂ 0.999,
/// ε 1e-8, weight decay 5e-4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 5e-4 }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. Weight decay is decoupled from the moment
/// estimates: p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.m.len(), "state matches parameters");
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);

    for ((param, grad), (m, v)) in
        params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(param.shape(), grad.shape(), "gradient shape");
        for i in 0..param.len() {
            let g = grad.data()[i];
            let mi = hyper.beta1 * m.data()[i] + (1.0 - hyper.beta1) * g;
            let vi = hyper.beta2 * v.data()[i] + (1.0 - hyper.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            let p = param.data()[i];
            param.data_mut()[i] =
                p - hyper.lr * m_hat / (v_hat.sqrt() + hyper.epsilon) - hyper.lr * hyper.weight_decay * p;
        }
    }
}
