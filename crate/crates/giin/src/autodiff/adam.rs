//! Adam optimizer state and update rule.

use crate::autodiff::Tensor;

/// First/second moment buffers and per-parameter step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
///
/// Increments `state.t` first, so the first call uses t = 1.
pub fn adam_step(value: &mut Tensor, grad: &Tensor, state: &mut AdamState, hyper: &AdamHyper) {
    debug_assert_eq!(value.shape(), grad.shape());
    debug_assert_eq!(value.shape(), state.m.shape());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    let p = value.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}
