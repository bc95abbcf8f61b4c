//! The variational autoencoder: encoder body, Gaussian heads, decoder, and
//! the hand-derived gradient of the λ-weighted negative ELBO.
//!
//! Conventions:
//! - hidden layers use ReLU, the decoder output uses a sigmoid, both heads
//!   are linear;
//! - the variance head predicts `log σ²`;
//! - the reconstruction term is the per-image sum of squared errors, and a
//!   batch loss is the batch mean of `SSE + λ·KL`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Layer widths `input, hidden..., latent`. The decoder mirrors the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    pub fn new(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "architecture needs at least input and latent sizes, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!(
                "architecture widths must be positive, got {widths:?}"
            )));
        }
        Ok(Architecture {
            input_dim: widths[0],
            hidden: widths[1..widths.len() - 1].to_vec(),
            latent_dim: widths[widths.len() - 1],
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.latent_dim);
        w
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("malformed architecture `{s}`: {e}")))?;
        Architecture::new(&widths)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder_body: Vec<DenseLayer>,
    mu_head: DenseLayer,
    logvar_head: DenseLayer,
    decoder: Vec<DenseLayer>,
    input_dim: usize,
    latent_dim: usize,
}

/// `μ_θ(X)` and `log σ²_θ(X)` for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Tensor,
    pub logvar: Tensor,
}

impl EncoderOutput {
    pub fn variance(&self) -> Tensor {
        self.logvar.map(f64::exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Tensor,
    pub eps: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Closed-form Gaussian KL against the standard normal prior.
    Kl,
    /// `½ Σ μ²` only; requires sampling to be disabled.
    QuadraticMu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub sampling: bool,
    pub penalty: PenaltyMode,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            lambda: 1.0,
            sampling: true,
            penalty: PenaltyMode::Kl,
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if self.penalty == PenaltyMode::QuadraticMu && self.sampling {
            return Err(Error::Config(
                "the quadratic mu penalty is only valid with sampling disabled".into(),
            ));
        }
        Ok(())
    }
}

/// Per-variable and total KL, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTerm {
    pub per_variable: Vec<f64>,
    pub total: f64,
}

/// Batch-mean loss and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub reconstruction: f64,
    /// Value of the regularizer actually optimized (KL or `½Σμ²`), unweighted.
    pub regularizer: f64,
    /// Gaussian KL of the encoder output, whatever the penalty mode.
    pub kl: KlTerm,
    /// Per latent variable: batch mean of `σ²(X)`.
    pub mean_variance: Vec<f64>,
    /// Per latent variable: batch variance of `μ(X)`.
    pub mu_variance: Vec<f64>,
}

/// Interventions on the latent layer used by the collapse experiment.
#[derive(Debug, Clone, Copy, Default)]
pub struct LatentControl<'a> {
    /// Coordinates pinned to the prior: `μ = 0`, `log σ² = 0`, no KL, no gradient.
    pub frozen: &'a [usize],
    /// Additive perturbation `z[:, index] += shift[row]`.
    pub shift: Option<(usize, &'a [f64])>,
}

/// Gradients in parameter declaration order (see [`VaeModel::layers`]).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<(Tensor, Tensor)>,
}

impl Gradients {
    pub fn flatten(&self) -> Tensor {
        let mut out = Vec::new();
        for (w, b) in &self.blocks {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        Tensor::from_vec(out)
    }
}

struct ForwardCache {
    /// Inputs to each encoder body layer, followed by the body output.
    encoder: Vec<Tensor>,
    mu: Tensor,
    logvar: Tensor,
    z: Tensor,
    /// Outputs of each decoder layer; the last one is the reconstruction.
    decoder: Vec<Tensor>,
}

impl VaeModel {
    /// Fresh Glorot-initialized model with a mirrored decoder.
    pub fn new(arch: &Architecture, rng: &mut Rng) -> Self {
        let widths = arch.widths();
        let body_widths = &widths[..widths.len() - 1];
        let encoder_body = body_widths
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], Activation::Relu, rng))
            .collect();
        let feature = *body_widths.last().expect("input width present");
        let mu_head = DenseLayer::glorot(feature, arch.latent_dim, Activation::Identity, rng);
        let logvar_head = DenseLayer::glorot(feature, arch.latent_dim, Activation::Identity, rng);
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        let last = rev.len() - 2;
        let decoder = rev
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                };
                DenseLayer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        VaeModel {
            encoder_body,
            mu_head,
            logvar_head,
            decoder,
            input_dim: arch.input_dim,
            latent_dim: arch.latent_dim,
        }
    }

    /// Assembles a model from explicit layers, checking that sizes chain.
    pub fn from_layers(
        encoder_body: Vec<DenseLayer>,
        mu_head: DenseLayer,
        logvar_head: DenseLayer,
        decoder: Vec<DenseLayer>,
    ) -> Result<Self> {
        let mismatch = |what: &str| Error::Config(format!("inconsistent layer sizes: {what}"));
        let input_dim = encoder_body
            .first()
            .map_or(mu_head.input_size(), DenseLayer::input_size);
        for pair in encoder_body.windows(2) {
            if pair[0].output_size() != pair[1].input_size() {
                return Err(mismatch("encoder body"));
            }
        }
        let feature = encoder_body.last().map_or(input_dim, DenseLayer::output_size);
        if mu_head.input_size() != feature || logvar_head.input_size() != feature {
            return Err(mismatch("heads do not match encoder output"));
        }
        let latent_dim = mu_head.output_size();
        if logvar_head.output_size() != latent_dim {
            return Err(mismatch("mu and logvar heads differ in size"));
        }
        let Some(first) = decoder.first() else {
            return Err(mismatch("empty decoder"));
        };
        if first.input_size() != latent_dim {
            return Err(mismatch("decoder input is not the latent size"));
        }
        for pair in decoder.windows(2) {
            if pair[0].output_size() != pair[1].input_size() {
                return Err(mismatch("decoder"));
            }
        }
        if decoder.last().map(DenseLayer::output_size) != Some(input_dim) {
            return Err(mismatch("decoder output is not the input size"));
        }
        Ok(VaeModel {
            encoder_body,
            mu_head,
            logvar_head,
            decoder,
            input_dim,
            latent_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn encoder_body(&self) -> &[DenseLayer] {
        &self.encoder_body
    }

    pub fn mu_head(&self) -> &DenseLayer {
        &self.mu_head
    }

    pub fn logvar_head(&self) -> &DenseLayer {
        &self.logvar_head
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    pub fn architecture(&self) -> Architecture {
        let mut widths = vec![self.input_dim];
        widths.extend(self.encoder_body.iter().map(DenseLayer::output_size));
        widths.push(self.latent_dim);
        Architecture::new(&widths).expect("model widths are valid")
    }

    /// All layers in declaration order: encoder body, μ head, log σ² head, decoder.
    pub fn layers(&self) -> Vec<&DenseLayer> {
        let mut v: Vec<&DenseLayer> = self.encoder_body.iter().collect();
        v.push(&self.mu_head);
        v.push(&self.logvar_head);
        v.extend(self.decoder.iter());
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut v: Vec<&mut DenseLayer> = self.encoder_body.iter_mut().collect();
        v.push(&mut self.mu_head);
        v.push(&mut self.logvar_head);
        v.extend(self.decoder.iter_mut());
        v
    }

    /// Stable names of the parameter blocks, in declaration order.
    pub fn layer_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.encoder_body.len())
            .map(|i| format!("encoder.{i}"))
            .collect();
        v.push("mu_head".into());
        v.push("logvar_head".into());
        v.extend((0..self.decoder.len()).map(|i| format!("decoder.{i}")));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights().len() + l.bias().len())
            .sum()
    }

    /// All parameters concatenated (weights then bias, per layer).
    pub fn flat_parameters(&self) -> Tensor {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights().data());
            out.extend_from_slice(l.bias().data());
        }
        Tensor::from_vec(out)
    }

    pub fn set_flat_parameters(&mut self, flat: &Tensor) -> Result<()> {
        flat.expect_shape("set_flat_parameters", &[self.parameter_count()])?;
        let mut offset = 0;
        for l in self.layers_mut() {
            let n = l.weights().len();
            l.weights_mut()
                .data_mut()
                .copy_from_slice(&flat.data()[offset..offset + n]);
            offset += n;
            let n = l.bias().len();
            l.bias_mut()
                .data_mut()
                .copy_from_slice(&flat.data()[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor, context: &'static str) -> Result<()> {
        x.expect_cols(context, self.input_dim)
    }

    pub fn encode(&self, x: &Tensor) -> Result<EncoderOutput> {
        self.check_input(x, "encode")?;
        let mut h = x.clone();
        for layer in &self.encoder_body {
            h = layer.forward_batch(&h);
        }
        Ok(EncoderOutput {
            mu: self.mu_head.forward_batch(&h),
            logvar: self.logvar_head.forward_batch(&h),
        })
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        z.expect_cols("decode", self.latent_dim)?;
        let mut h = z.clone();
        for layer in &self.decoder {
            h = layer.forward_batch(&h);
        }
        Ok(h)
    }

    fn forward_cached(
        &self,
        x: &Tensor,
        objective: &Objective,
        eps: Option<&Tensor>,
        control: &LatentControl<'_>,
    ) -> Result<ForwardCache> {
        let mut encoder = vec![x.clone()];
        for layer in &self.encoder_body {
            let next = layer.forward_batch(encoder.last().expect("nonempty"));
            encoder.push(next);
        }
        let h = encoder.last().expect("nonempty");
        let mut mu = self.mu_head.forward_batch(h);
        let mut logvar = self.logvar_head.forward_batch(h);
        for &i in control.frozen {
            if i >= self.latent_dim {
                return Err(Error::Range {
                    what: "frozen latent",
                    index: i,
                    limit: self.latent_dim,
                });
            }
            for r in 0..mu.rows() {
                mu.set(r, i, 0.0);
                logvar.set(r, i, 0.0);
            }
        }
        let mut z = if objective.sampling {
            let eps = eps.ok_or_else(|| {
                Error::Config("sampling enabled but no noise supplied".into())
            })?;
            eps.expect_shape("reparameterize eps", mu.shape())?;
            reparameterize_with(&mu, &logvar, eps)
        } else {
            mu.clone()
        };
        if let Some((index, shift)) = control.shift {
            if index >= self.latent_dim {
                return Err(Error::Range {
                    what: "perturbed latent",
                    index,
                    limit: self.latent_dim,
                });
            }
            if shift.len() != z.rows() {
                return Err(Error::Dimension {
                    context: "latent shift",
                    expected: vec![z.rows()],
                    actual: vec![shift.len()],
                });
            }
            for (r, s) in shift.iter().enumerate() {
                let v = z.get(r, index) + s;
                z.set(r, index, v);
            }
        }
        let mut decoder = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let next = layer.forward_batch(decoder.last().unwrap_or(&z));
            decoder.push(next);
        }
        Ok(ForwardCache {
            encoder,
            mu,
            logvar,
            z,
            decoder,
        })
    }

    /// Batch loss and gradients for all parameters.
    ///
    /// `eps` supplies the reparametrization noise (`batch × latent`) and is
    /// required when `objective.sampling` is set.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor,
        objective: &Objective,
        eps: Option<&Tensor>,
        control: &LatentControl<'_>,
    ) -> Result<(LossParts, Gradients)> {
        objective.validate()?;
        self.check_input(x, "loss_and_gradients")?;
        let cache = self.forward_cached(x, objective, eps, control)?;
        let parts = loss_parts(x, &cache, objective, control.frozen);
        let batch = x.rows() as f64;
        let lambda = objective.lambda;

        // d/dx̂ of mean SSE
        let recon = cache.decoder.last().expect("decoder nonempty");
        let mut upstream = Tensor::new(
            recon.shape().to_vec(),
            recon
                .data()
                .iter()
                .zip(x.data())
                .map(|(r, t)| 2.0 * (r - t) / batch)
                .collect(),
        )?;

        let n_dec = self.decoder.len();
        let mut dec_grads = Vec::with_capacity(n_dec);
        for i in (0..n_dec).rev() {
            let input = if i == 0 { &cache.z } else { &cache.decoder[i - 1] };
            let g = self.decoder[i].backward_batch(input, &cache.decoder[i], upstream, true);
            upstream = g.input.clone().expect("requested");
            dec_grads.push((g.weights, g.bias));
        }
        dec_grads.reverse();
        let dz = upstream;

        let mut dmu = dz.clone();
        let mut dlogvar = Tensor::zeros(cache.logvar.shape());
        if objective.sampling {
            let eps = eps.expect("checked in forward");
            for (((g, &d), &e), &lv) in dlogvar
                .data_mut()
                .iter_mut()
                .zip(dz.data())
                .zip(eps.data())
                .zip(cache.logvar.data())
            {
                *g = d * e * 0.5 * (0.5 * lv).exp();
            }
        }
        match objective.penalty {
            PenaltyMode::Kl => {
                for (g, &m) in dmu.data_mut().iter_mut().zip(cache.mu.data()) {
                    *g += lambda * m / batch;
                }
                for (g, &lv) in dlogvar.data_mut().iter_mut().zip(cache.logvar.data()) {
                    *g += lambda * 0.5 * (lv.exp() - 1.0) / batch;
                }
            }
            PenaltyMode::QuadraticMu => {
                for (g, &m) in dmu.data_mut().iter_mut().zip(cache.mu.data()) {
                    *g += lambda * m / batch;
                }
            }
        }
        for &i in control.frozen {
            for r in 0..dmu.rows() {
                dmu.set(r, i, 0.0);
                dlogvar.set(r, i, 0.0);
            }
        }

        // Heads are linear, so the (possibly overwritten) cached outputs only
        // serve as a shape witness here.
        let h = cache.encoder.last().expect("nonempty");
        let n_enc = self.encoder_body.len();
        let need_h_grad = n_enc > 0;
        let gm = self.mu_head.backward_batch(h, &cache.mu, dmu, need_h_grad);
        let gl = self
            .logvar_head
            .backward_batch(h, &cache.logvar, dlogvar, need_h_grad);

        let mut enc_grads = Vec::with_capacity(n_enc);
        if need_h_grad {
            let mut upstream = gm.input.expect("requested");
            for (a, b) in upstream
                .data_mut()
                .iter_mut()
                .zip(gl.input.expect("requested").data())
            {
                *a += b;
            }
            for i in (0..n_enc).rev() {
                let g = self.encoder_body[i].backward_batch(
                    &cache.encoder[i],
                    &cache.encoder[i + 1],
                    upstream,
                    i > 0,
                );
                enc_grads.push((g.weights, g.bias));
                match g.input {
                    Some(next) => upstream = next,
                    None => break,
                }
            }
            enc_grads.reverse();
        }

        let mut blocks = enc_grads;
        blocks.push((gm.weights, gm.bias));
        blocks.push((gl.weights, gl.bias));
        blocks.extend(dec_grads);
        Ok((parts, Gradients { blocks }))
    }

    /// Loss only, with explicit noise (the same contract as
    /// [`VaeModel::loss_and_gradients`]).
    pub fn loss_with_noise(
        &self,
        x: &Tensor,
        objective: &Objective,
        eps: Option<&Tensor>,
        control: &LatentControl<'_>,
    ) -> Result<LossParts> {
        objective.validate()?;
        self.check_input(x, "loss_with_noise")?;
        let cache = self.forward_cached(x, objective, eps, control)?;
        Ok(loss_parts(x, &cache, objective, control.frozen))
    }
}

fn loss_parts(x: &Tensor, cache: &ForwardCache, objective: &Objective, frozen: &[usize]) -> LossParts {
    let batch = x.rows() as f64;
    let recon = cache.decoder.last().expect("decoder nonempty");
    let reconstruction = sum_squared_error(x, recon) / batch;
    let kl = kl_from_parts(&cache.mu, &cache.logvar, frozen);
    let regularizer = match objective.penalty {
        PenaltyMode::Kl => kl.total,
        PenaltyMode::QuadraticMu => {
            0.5 * cache.mu.data().iter().map(|m| m * m).sum::<f64>() / batch
        }
    };
    let (mu_variance, mean_variance) = column_moments(&cache.mu, &cache.logvar);
    LossParts {
        loss: reconstruction + objective.lambda * regularizer,
        reconstruction,
        regularizer,
        kl,
        mean_variance,
        mu_variance,
    }
}

/// Per column: population variance of `mu` and mean of `exp(logvar)`.
fn column_moments(mu: &Tensor, logvar: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = mu.rows().max(1) as f64;
    let cols = mu.cols();
    let mut mean = vec![0.0; cols];
    let mut var_mean = vec![0.0; cols];
    for r in 0..mu.rows() {
        for j in 0..cols {
            mean[j] += mu.get(r, j);
            var_mean[j] += logvar.get(r, j).exp();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    var_mean.iter_mut().for_each(|v| *v /= n);
    let mut spread = vec![0.0; cols];
    for r in 0..mu.rows() {
        for j in 0..cols {
            spread[j] += (mu.get(r, j) - mean[j]).powi(2);
        }
    }
    spread.iter_mut().for_each(|v| *v /= n);
    (spread, var_mean)
}

pub(crate) fn sum_squared_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Per-row SSE between two equally shaped batches.
pub fn per_row_sse(a: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..a.rows())
        .map(|r| {
            a.row(r)
                .iter()
                .zip(b.row(r))
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
        .collect()
}

/// Closed-form `KL(N(μ, σ²) ‖ N(0, 1)) = ½(μ² + σ² − log σ² − 1)` of one coordinate.
pub fn gaussian_kl(mu: f64, logvar: f64) -> f64 {
    0.5 * (mu * mu + logvar.exp() - logvar - 1.0)
}

fn kl_from_parts(mu: &Tensor, logvar: &Tensor, excluded: &[usize]) -> KlTerm {
    let latent = mu.cols();
    let batch = mu.rows().max(1) as f64;
    let mut per_variable = vec![0.0; latent];
    for r in 0..mu.rows() {
        for (j, acc) in per_variable.iter_mut().enumerate() {
            *acc += gaussian_kl(mu.get(r, j), logvar.get(r, j));
        }
    }
    for v in &mut per_variable {
        *v /= batch;
    }
    for &i in excluded {
        per_variable[i] = 0.0;
    }
    KlTerm {
        total: per_variable.iter().sum(),
        per_variable,
    }
}

/// Batch-averaged KL per latent coordinate and in total.
pub fn kl_term(enc: &EncoderOutput) -> KlTerm {
    kl_from_parts(&enc.mu, &enc.logvar, &[])
}

fn reparameterize_with(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Tensor {
    Tensor::new(
        mu.shape().to_vec(),
        mu.data()
            .iter()
            .zip(logvar.data())
            .zip(eps.data())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect(),
    )
    .expect("same shape")
}

/// `z = μ + exp(½ log σ²) ⊙ ε` with fresh `ε ~ N(0, 1)`.
pub fn reparameterize(enc: &EncoderOutput, rng: &mut Rng) -> LatentSample {
    let mut eps = Tensor::zeros(enc.mu.shape());
    rng.fill_normal(eps.data_mut());
    let z = reparameterize_with(&enc.mu, &enc.logvar, &eps);
    LatentSample { z, eps }
}

/// Same as [`reparameterize`] with caller-provided noise.
pub fn reparameterize_fixed(enc: &EncoderOutput, eps: &Tensor) -> Result<LatentSample> {
    eps.expect_shape("reparameterize eps", enc.mu.shape())?;
    Ok(LatentSample {
        z: reparameterize_with(&enc.mu, &enc.logvar, eps),
        eps: eps.clone(),
    })
}

/// Mean batch loss with noise drawn from `rng` when sampling is enabled.
pub fn vae_loss(
    x: &Tensor,
    model: &VaeModel,
    objective: &Objective,
    rng: &mut Rng,
) -> Result<LossParts> {
    objective.validate()?;
    let eps = objective.sampling.then(|| {
        let mut e = Tensor::zeros(&[x.rows(), model.latent_dim()]);
        rng.fill_normal(e.data_mut());
        e
    });
    model.loss_with_noise(x, objective, eps.as_ref(), &LatentControl::default())
}

/// Draws `n` latent vectors from the prior.
pub fn prior_latents(n: usize, latent_dim: usize, rng: &mut Rng) -> Tensor {
    let mut z = Tensor::zeros(&[n, latent_dim]);
    rng.fill_normal(z.data_mut());
    z
}

/// Sets the listed latent coordinates to zero in every row.
pub fn zero_coordinates(z: &Tensor, mask: &[usize]) -> Result<Tensor> {
    let latent = z.cols();
    let mut out = z.clone();
    for &i in mask {
        if i >= latent {
            return Err(Error::Range {
                what: "latent",
                index: i,
                limit: latent,
            });
        }
        for r in 0..out.rows() {
            out.set(r, i, 0.0);
        }
    }
    Ok(out)
}

/// Decodes `n` prior samples, with the coordinates in `zero_mask` forced to 0.
pub fn sample_prior(
    model: &VaeModel,
    n: usize,
    rng: &mut Rng,
    zero_mask: &[usize],
) -> Result<Tensor> {
    if let Some(&bad) = zero_mask.iter().find(|&&i| i >= model.latent_dim()) {
        return Err(Error::Range {
            what: "latent",
            index: bad,
            limit: model.latent_dim(),
        });
    }
    let z = prior_latents(n, model.latent_dim(), rng);
    model.decode(&zero_coordinates(&z, zero_mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{finite_diff_grad, max_relative_error};

    fn toy(seed: u64, widths: &[usize]) -> VaeModel {
        let mut rng = Rng::new(seed);
        let mut m = VaeModel::new(&Architecture::new(widths).unwrap(), &mut rng);
        for l in m.layers_mut() {
            for b in l.bias_mut().data_mut() {
                *b = 0.1 * rng.normal();
            }
        }
        m
    }

    fn batch(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn architecture_parsing() {
        let a: Architecture = "784,256,32,24,16".parse().unwrap();
        assert_eq!(a.latent_dim, 16);
        assert_eq!(a.hidden, vec![256, 32, 24]);
        assert_eq!(a.to_string(), "784,256,32,24,16");
        assert!("784,,16".parse::<Architecture>().is_err());
        assert!("784".parse::<Architecture>().is_err());
        assert!("784,0,16".parse::<Architecture>().is_err());
    }

    #[test]
    fn mirrored_layout() {
        let m = toy(1, &[10, 6, 4, 3]);
        assert_eq!(m.encoder_body().len(), 2);
        let dec: Vec<(usize, usize)> = m
            .decoder()
            .iter()
            .map(|l| (l.input_size(), l.output_size()))
            .collect();
        assert_eq!(dec, vec![(3, 4), (4, 6), (6, 10)]);
        assert_eq!(m.decoder()[2].activation(), Activation::Sigmoid);
        assert_eq!(m.decoder()[0].activation(), Activation::Relu);
        assert_eq!(m.mu_head().activation(), Activation::Identity);
        assert_eq!(m.architecture().widths(), vec![10, 6, 4, 3]);
    }

    #[test]
    fn encode_shape_and_determinism() {
        let m = toy(2, &[8, 5, 3]);
        let x = batch(&mut Rng::new(3), 4, 8);
        let a = m.encode(&x).unwrap();
        let b = m.encode(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mu.shape(), &[4, 3]);
        assert!(a.mu.is_finite() && a.logvar.is_finite());
        assert!(m.encode(&batch(&mut Rng::new(3), 4, 7)).is_err());
    }

    #[test]
    fn decode_range_contract() {
        let m = toy(3, &[784, 32, 4]);
        let img = m.decode(&Tensor::zeros(&[1, 4])).unwrap();
        assert_eq!(img.shape(), &[1, 784]);
        assert!(img.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(m.decode(&Tensor::zeros(&[1, 5])).is_err());
    }

    #[test]
    fn reparameterize_edge_cases() {
        let enc = EncoderOutput {
            mu: Tensor::matrix(1, 2, vec![0.7, 0.0]).unwrap(),
            logvar: Tensor::matrix(1, 2, vec![-50.0, 0.0]).unwrap(),
        };
        let eps = Tensor::matrix(1, 2, vec![3.0, 1.5]).unwrap();
        let s = reparameterize_fixed(&enc, &eps).unwrap();
        assert!((s.z.get(0, 0) - 0.7).abs() < 1e-10);
        assert_eq!(s.z.get(0, 1), 1.5);
    }

    #[test]
    fn reparameterized_moments() {
        let n = 100_000;
        let (mu, lv) = (0.8, (0.3f64).ln());
        let enc = EncoderOutput {
            mu: Tensor::filled(&[n, 1], mu),
            logvar: Tensor::filled(&[n, 1], lv),
        };
        let s = reparameterize(&enc, &mut Rng::new(17));
        let mean = s.z.sum() / n as f64;
        let var = s.z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - mu).abs() / mu < 0.02, "{mean}");
        assert!((var - 0.3).abs() / 0.3 < 0.02, "{var}");
    }

    #[test]
    fn kl_known_values() {
        let enc = |m: f64, lv: f64| EncoderOutput {
            mu: Tensor::matrix(1, 1, vec![m]).unwrap(),
            logvar: Tensor::matrix(1, 1, vec![lv]).unwrap(),
        };
        assert!(kl_term(&enc(0.0, 0.0)).total.abs() < 1e-12);
        assert!((kl_term(&enc(1.0, 0.0)).total - 0.5).abs() < 1e-15);
        let two = EncoderOutput {
            mu: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            logvar: Tensor::zeros(&[2, 2]),
        };
        let kl = kl_term(&two);
        assert_eq!(kl.per_variable, vec![0.25, 0.0]);
        assert_eq!(kl.total, 0.25);
    }

    #[test]
    fn lambda_zero_is_plain_autoencoder() {
        let m = toy(4, &[6, 4, 2]);
        let x = batch(&mut Rng::new(5), 3, 6);
        let obj = Objective {
            lambda: 0.0,
            sampling: false,
            penalty: PenaltyMode::Kl,
        };
        let parts = m.loss_with_noise(&x, &obj, None, &LatentControl::default()).unwrap();
        let enc = m.encode(&x).unwrap();
        let recon = m.decode(&enc.mu).unwrap();
        let sse = sum_squared_error(&x, &recon) / 3.0;
        assert!((parts.loss - sse).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_with_prior_posterior_is_zero_loss() {
        // One linear layer per side; μ head zero, log σ² head zero, decoder
        // bias chosen so sigmoid output equals the constant input.
        let target = 0.25f64;
        let logit = (target / (1.0 - target)).ln();
        let zero = |o: usize, i: usize| Tensor::zeros(&[o, i]);
        let mu = DenseLayer::new(zero(1, 2), Tensor::zeros(&[1]), Activation::Identity).unwrap();
        let lv = mu.clone();
        let dec = DenseLayer::new(zero(2, 1), Tensor::filled(&[2], logit), Activation::Sigmoid)
            .unwrap();
        let m = VaeModel::from_layers(vec![], mu, lv, vec![dec]).unwrap();
        let x = Tensor::filled(&[3, 2], target);
        let parts = vae_loss(&x, &m, &Objective::default(), &mut Rng::new(1)).unwrap();
        assert!(parts.loss.abs() < 1e-12, "{}", parts.loss);
    }

    #[test]
    fn quadratic_penalty_requires_no_sampling() {
        let bad = Objective {
            lambda: 1.0,
            sampling: true,
            penalty: PenaltyMode::QuadraticMu,
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let neg = Objective {
            lambda: -1.0,
            ..Objective::default()
        };
        assert!(neg.validate().is_err());
    }

    fn check_gradients(m: &VaeModel, x: &Tensor, obj: &Objective, eps: Option<&Tensor>, control: &LatentControl<'_>) {
        let (_, grads) = m.loss_and_gradients(x, obj, eps, control).unwrap();
        let analytic = grads.flatten();
        let numeric = finite_diff_grad(
            |p| {
                let mut probe = m.clone();
                probe.set_flat_parameters(p).unwrap();
                probe.loss_with_noise(x, obj, eps, control).unwrap().loss
            },
            &m.flat_parameters(),
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-8);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradients_match_finite_differences_all_modes() {
        let m = toy(6, &[4, 3, 2]);
        let mut rng = Rng::new(7);
        let x = batch(&mut rng, 3, 4);
        let eps = prior_latents(3, 2, &mut rng);
        let modes = [
            (Objective::default(), Some(&eps)),
            (
                Objective {
                    lambda: 0.3,
                    sampling: false,
                    penalty: PenaltyMode::Kl,
                },
                None,
            ),
            (
                Objective {
                    lambda: 1.0,
                    sampling: false,
                    penalty: PenaltyMode::QuadraticMu,
                },
                None,
            ),
        ];
        for (obj, e) in modes {
            check_gradients(&m, &x, &obj, e, &LatentControl::default());
        }
        let shift = [0.3, -0.2, 0.5];
        let frozen = [1usize];
        let control = LatentControl {
            frozen: &frozen,
            shift: Some((0, &shift)),
        };
        check_gradients(&m, &x, &Objective::default(), Some(&eps), &control);
    }

    #[test]
    fn frozen_coordinates_have_zero_head_gradient() {
        let m = toy(8, &[5, 4, 3]);
        let mut rng = Rng::new(9);
        let x = batch(&mut rng, 2, 5);
        let eps = prior_latents(2, 3, &mut rng);
        let frozen = [2usize];
        let control = LatentControl {
            frozen: &frozen,
            shift: None,
        };
        let (parts, g) = m
            .loss_and_gradients(&x, &Objective::default(), Some(&eps), &control)
            .unwrap();
        assert_eq!(parts.kl.per_variable[2], 0.0);
        let n_enc = m.encoder_body().len();
        for head in [n_enc, n_enc + 1] {
            let (w, b) = &g.blocks[head];
            assert!(w.row(2).iter().all(|&v| v == 0.0));
            assert_eq!(b.data()[2], 0.0);
        }
    }

    #[test]
    fn sample_prior_masks() {
        let m = toy(10, &[6, 4, 3]);
        let all = sample_prior(&m, 4, &mut Rng::new(1), &[0, 1, 2]).unwrap();
        let origin = m.decode(&Tensor::zeros(&[1, 3])).unwrap();
        for r in 0..4 {
            assert_eq!(all.row(r), origin.row(0));
        }
        assert!(matches!(
            sample_prior(&m, 1, &mut Rng::new(1), &[3]),
            Err(Error::Range { index: 3, .. })
        ));
    }
}
