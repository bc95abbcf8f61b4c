use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `block` names the
/// parameter block in errors.
pub fn adam_step(
    params: &mut Tensor,
    grads: &Tensor,
    state: &mut AdamState,
    block: &str,
) -> Result<()> {
    grads.expect_shape("adam_step grads", params.shape())?;
    state.m.expect_shape("adam_step state", params.shape())?;
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient {
            block: block.to_string(),
        });
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let step = lr * c2.sqrt() / c1;
    let eps_hat = eps * c2.sqrt();
    for (((p, &g), m), v) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(state.m.data_mut())
        .zip(state.v.data_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        // lr·m̂/(√v̂+ε) rewritten with the corrections folded into `step`.
        *p -= step * *m / (v.sqrt() + eps_hat);
    }
    Ok(())
}
