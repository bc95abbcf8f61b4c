//! Latent-space diagnostics: per-variable statistics and activity, the
//! `variance(μ) + mean(σ²) ≈ 1` stationarity law, KL under a fixed
//! variance/mean² ratio, reconstruction gain, and the noise-injection
//! collapse experiment.

mod gain;
mod noise;
mod rho;
mod stats;

pub use gain::{mean_reconstruction_error, reconstruction_gain, reconstruction_gain_with};
pub use noise::{
    dataset_kl, noise_injection_experiment, ExperimentLog, NoiseSchedule, Phase, ProbeRecord,
    DEFAULT_NOISE_STEP,
};
pub use rho::{kl_at_ratio, kl_rho_curve, kl_rho_minimum, linear_grid, RhoAnalysis};
pub use stats::{
    classify_pair, classify_variables, latent_stats, latent_stats_with, stationarity_check,
    stationarity_of_pairs, LatentStats, Stationarity, Status, Thresholds, VariableReport,
    VariableStatus, DEFAULT_SIGMA_THRESHOLD, DEFAULT_VAR_THRESHOLD,
};
