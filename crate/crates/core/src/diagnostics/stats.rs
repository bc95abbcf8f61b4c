use crate::data::Dataset;
use crate::error::Result;
use crate::model::{EncoderOutput, VaeModel};
use crate::parallel::{map_chunks, EVAL_CHUNK};

pub const DEFAULT_VAR_THRESHOLD: f64 = 0.01;
pub const DEFAULT_SIGMA_THRESHOLD: f64 = 0.8;

/// Dataset-level statistics of each latent coordinate, computed from the
/// deterministic encoder heads (no sampling).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    /// Variance over the dataset of `μ_i(X)`.
    pub global_mu_variance: Vec<f64>,
    /// Mean over the dataset of `σ²_i(X)`.
    pub mean_local_variance: Vec<f64>,
    /// Mean over the dataset of `μ_i(X)`.
    pub mean_mu: Vec<f64>,
}

impl LatentStats {
    pub fn latent_dim(&self) -> usize {
        self.mean_mu.len()
    }
}

/// Two passes over the data: means first, then squared deviations.
pub fn latent_stats(model: &VaeModel, data: &Dataset) -> Result<LatentStats> {
    latent_stats_with(model, data, &[])
}

/// As [`latent_stats`], with the `pinned` coordinates reported at the prior
/// (`μ = 0`, `σ² = 1`), matching how training treats frozen variables.
pub fn latent_stats_with(model: &VaeModel, data: &Dataset, pinned: &[usize]) -> Result<LatentStats> {
    let latent = model.latent_dim();
    let n = data.len();
    let images = data.images();
    let encode = |r: std::ops::Range<usize>| {
        let idx: Vec<usize> = r.collect();
        model.encode(&images.select_rows(&idx))
    };
    let encodings: Vec<_> = map_chunks(n, EVAL_CHUNK, encode)
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(stats_from_encodings(&encodings, latent, pinned))
}

/// Statistics from chunked encodings of a whole dataset, in chunk order.
pub(super) fn stats_from_encodings(
    encodings: &[EncoderOutput],
    latent: usize,
    pinned: &[usize],
) -> LatentStats {
    let n: usize = encodings.iter().map(|e| e.mu.rows()).sum();
    let mut mean_mu = vec![0.0; latent];
    let mut mean_var = vec![0.0; latent];
    for enc in encodings {
        for r in 0..enc.mu.rows() {
            for j in 0..latent {
                mean_mu[j] += enc.mu.get(r, j);
                mean_var[j] += enc.logvar.get(r, j).exp();
            }
        }
    }
    mean_mu.iter_mut().for_each(|v| *v /= n as f64);
    mean_var.iter_mut().for_each(|v| *v /= n as f64);

    let mut spread = vec![0.0; latent];
    for enc in encodings {
        for r in 0..enc.mu.rows() {
            for j in 0..latent {
                spread[j] += (enc.mu.get(r, j) - mean_mu[j]).powi(2);
            }
        }
    }
    spread.iter_mut().for_each(|v| *v /= n as f64);

    for &i in pinned {
        mean_mu[i] = 0.0;
        spread[i] = 0.0;
        mean_var[i] = 1.0;
    }
    LatentStats {
        global_mu_variance: spread,
        mean_local_variance: mean_var,
        mean_mu,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Active,
    Inactive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Active => "active",
            Status::Inactive => "inactive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableStatus {
    pub index: usize,
    pub status: Status,
    pub global_mu_variance: f64,
    pub mean_local_variance: f64,
    pub stationarity_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableReport {
    pub variables: Vec<VariableStatus>,
}

impl VariableReport {
    pub fn inactive(&self) -> Vec<usize> {
        self.variables
            .iter()
            .filter(|v| v.status == Status::Inactive)
            .map(|v| v.index)
            .collect()
    }

    pub fn inactive_count(&self) -> usize {
        self.inactive().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub var_threshold: f64,
    pub sigma_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            var_threshold: DEFAULT_VAR_THRESHOLD,
            sigma_threshold: DEFAULT_SIGMA_THRESHOLD,
        }
    }
}

/// Inactive iff the variance of `μ` is below `var_threshold` and the mean
/// predicted variance is above `sigma_threshold`.
pub fn classify_pair(global_mu_variance: f64, mean_local_variance: f64, t: Thresholds) -> Status {
    if global_mu_variance < t.var_threshold && mean_local_variance > t.sigma_threshold {
        Status::Inactive
    } else {
        Status::Active
    }
}

pub fn classify_variables(stats: &LatentStats, t: Thresholds) -> VariableReport {
    let variables = stats
        .global_mu_variance
        .iter()
        .zip(&stats.mean_local_variance)
        .enumerate()
        .map(|(index, (&g, &m))| VariableStatus {
            index,
            status: classify_pair(g, m, t),
            global_mu_variance: g,
            mean_local_variance: m,
            stationarity_sum: g + m,
        })
        .collect();
    VariableReport { variables }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationarity {
    pub sums: Vec<f64>,
    pub mean: f64,
    /// Population variance of `sums`.
    pub variance: f64,
}

/// Per-coordinate `variance(μ) + mean(σ²)`, with their mean and variance.
pub fn stationarity_check(stats: &LatentStats) -> Stationarity {
    stationarity_of_pairs(
        stats
            .global_mu_variance
            .iter()
            .zip(&stats.mean_local_variance)
            .map(|(&g, &m)| (g, m)),
    )
}

pub fn stationarity_of_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Stationarity {
    let sums: Vec<f64> = pairs.into_iter().map(|(g, m)| g + m).collect();
    let n = sums.len().max(1) as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let variance = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Stationarity {
        sums,
        mean,
        variance,
    }
}
