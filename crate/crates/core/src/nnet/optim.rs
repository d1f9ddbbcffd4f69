use super::{ParamStore, Real};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for every tensor of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update from the gradients accumulated in each
/// tensor's `grad` buffer (missing buffers count as zero gradient).
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    assert_eq!(state.m.len(), store.len(), "optimizer state does not match store");
    state.step += 1;
    let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
    let bc1 = T::one() - T::c(cfg.beta1.powi(state.step as i32));
    let bc2 = T::one() - T::c(cfg.beta2.powi(state.step as i32));
    let (lr, eps) = (T::c(cfg.lr), T::c(cfg.eps));
    for ((t, m), v) in store.tensors_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..t.data.len() {
            let g = t.grad.as_ref().map_or(T::zero(), |g| g[i]);
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            t.data[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
