//! KL divergence of one latent variable when the network keeps a fixed
//! ratio `ρ² = σ²/μ²`: substituting `μ² = σ²/ρ²` into the closed form gives
//! `½(σ²(1+ρ²)/ρ² − log σ² − 1)`, minimized at `σ² = ρ²/(1+ρ²)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RhoAnalysis {
    pub rho2: f64,
    pub sigma2_grid: Vec<f64>,
    pub kl_values: Vec<f64>,
    /// Analytic minimizer `ρ²/(1+ρ²)`.
    pub sigma2_min: f64,
}

impl RhoAnalysis {
    /// Grid point with the smallest KL value.
    pub fn grid_argmin(&self) -> f64 {
        let (i, _) = self
            .kl_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
        self.sigma2_grid[i]
    }
}

pub fn kl_at_ratio(rho2: f64, sigma2: f64) -> f64 {
    0.5 * (sigma2 * (1.0 + rho2) / rho2 - sigma2.ln() - 1.0)
}

pub fn kl_rho_minimum(rho2: f64) -> Result<f64> {
    if !(rho2 >= 0.0) || rho2.is_infinite() {
        return Err(Error::Domain(format!("rho^2 must be finite and >= 0, got {rho2}")));
    }
    Ok(rho2 / (1.0 + rho2))
}

pub fn kl_rho_curve(rho2: f64, sigma2_grid: &[f64]) -> Result<RhoAnalysis> {
    if !(rho2 > 0.0) || rho2.is_infinite() {
        return Err(Error::Domain(format!("rho^2 must be finite and > 0, got {rho2}")));
    }
    if let Some(bad) = sigma2_grid.iter().find(|&&s| !(s > 0.0) || s.is_infinite()) {
        return Err(Error::Domain(format!("grid variance {bad} is not positive")));
    }
    Ok(RhoAnalysis {
        rho2,
        kl_values: sigma2_grid.iter().map(|&s| kl_at_ratio(rho2, s)).collect(),
        sigma2_grid: sigma2_grid.to_vec(),
        sigma2_min: kl_rho_minimum(rho2)?,
    })
}

/// `points` evenly spaced values in `[low, high]`.
pub fn linear_grid(low: f64, high: f64, points: usize) -> Result<Vec<f64>> {
    if !(low > 0.0) || !(high > low) || points < 2 {
        return Err(Error::Domain(format!(
            "grid needs 0 < low < high and at least 2 points, got [{low}, {high}] x {points}"
        )));
    }
    let step = (high - low) / (points - 1) as f64;
    Ok((0..points).map(|i| low + step * i as f64).collect())
}
