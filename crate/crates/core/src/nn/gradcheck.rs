use crate::tensor::Tensor;

/// Central finite differences of `loss` at `params`, one coordinate at a time.
pub fn finite_diff_grad(mut loss: impl FnMut(&Tensor) -> f64, params: &Tensor, eps: f64) -> Tensor {
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = params.clone();
    let mut grad = Tensor::zeros(params.shape());
    for i in 0..params.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Largest relative error between two gradients. Entries whose analytic
/// magnitude is below `abs_floor` are compared absolutely.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, abs_floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if a.abs() < abs_floor {
                diff
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
