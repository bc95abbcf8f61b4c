#![allow(dead_code)]

use std::path::PathBuf;

use vae_lab::model::{LatentControl, Objective, PenaltyMode};
use vae_lab::nn::gradcheck::{finite_diff_grad, max_relative_error};
use vae_lab::nn::{Activation, DenseLayer};
use vae_lab::rng::Rng;
use vae_lab::{Architecture, Tensor, VaeModel};

pub const FD_STEP: f64 = 1e-5;

/// A small model from `seed` with random non-zero biases, so ReLU units are
/// not all pinned at the origin.
pub fn toy_model(seed: u64, widths: &[usize]) -> VaeModel {
    let mut rng = Rng::new(seed);
    let mut m = VaeModel::new(&Architecture::new(widths).unwrap(), &mut rng);
    for l in m.layers_mut() {
        for b in l.bias_mut().data_mut() {
            *b = 0.2 * rng.normal();
        }
    }
    m
}

pub fn unit_batch(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
}

fn preactivation(layer: &DenseLayer, x: &Tensor) -> Tensor {
    DenseLayer::new(layer.weights().clone(), layer.bias().clone(), Activation::Identity)
        .unwrap()
        .forward(x)
        .unwrap()
}

/// Smallest |pre-activation| over every ReLU unit in a forward pass. Central
/// differences are meaningless within `FD_STEP` of a kink.
pub fn relu_margin(model: &VaeModel, x: &Tensor, objective: &Objective, eps: Option<&Tensor>) -> f64 {
    let mut margin = f64::INFINITY;
    let mut track = |layer: &DenseLayer, input: &Tensor| -> Tensor {
        let pre = preactivation(layer, input);
        if layer.activation() == Activation::Relu {
            for &v in pre.data() {
                margin = margin.min(v.abs());
            }
        }
        pre.map(|v| layer.activation().apply(v))
    };
    let mut h = x.clone();
    for l in model.encoder_body() {
        h = track(l, &h);
    }
    let mu = model.mu_head().forward(&h).unwrap();
    let logvar = model.logvar_head().forward(&h).unwrap();
    let mut z = mu.clone();
    if objective.sampling {
        let e = eps.unwrap();
        for (i, zi) in z.data_mut().iter_mut().enumerate() {
            *zi += (0.5 * logvar.data()[i]).exp() * e.data()[i];
        }
    }
    for l in model.decoder() {
        z = track(l, &z);
    }
    margin
}

/// Worst relative error between backprop and central differences of the
/// full loss.
pub fn gradient_error(model: &VaeModel, x: &Tensor, objective: &Objective, eps: Option<&Tensor>) -> f64 {
    let control = LatentControl::default();
    let (_, grads) = model.loss_and_gradients(x, objective, eps, &control).unwrap();
    let numeric = finite_diff_grad(
        |p| {
            let mut probe = model.clone();
            probe.set_flat_parameters(p).unwrap();
            probe.loss_with_noise(x, objective, eps, &control).unwrap().loss
        },
        &model.flat_parameters(),
        FD_STEP,
    );
    max_relative_error(&grads.flatten(), &numeric, 1e-7)
}

pub fn objective_for(mode: usize, lambda: f64) -> Objective {
    match mode % 3 {
        0 => Objective { lambda, sampling: true, penalty: PenaltyMode::Kl },
        1 => Objective { lambda, sampling: false, penalty: PenaltyMode::Kl },
        _ => Objective { lambda, sampling: false, penalty: PenaltyMode::QuadraticMu },
    }
}

/// KL(N(μ, σ²) ‖ N(0, 1)) by composite Simpson quadrature of
/// `∫ p log(p/q)` over ±`half_width` standard deviations.
pub fn kl_quadrature(mu: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let half_width = 14.0;
    let n = 40_000;
    let h = 2.0 * half_width / n as f64;
    let f = |t: f64| {
        let z = mu + sigma * t;
        let p = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let log_ratio = -0.5 * t * t - sigma.ln() + 0.5 * z * z;
        p * log_ratio
    };
    let mut acc = f(-half_width) + f(half_width);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(-half_width + k as f64 * h);
    }
    acc * h / 3.0
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("VAE_LAB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist"))
}
