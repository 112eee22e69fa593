//! Monte Carlo diagnostics for the tail and margin conditions.

use rand::Rng;

use super::dist::ContextDistribution;
use super::reward::RewardFamily;
use super::EnvError;
use crate::stats::{linspace, ols_slope};

/// Smallest sample count accepted by the probes.
pub const MIN_PROBE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub u_grid: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Least-squares slope of `ln P` against `ln u` over the nonzero estimates.
    pub slope: Option<f64>,
}

/// `peak * 10^s` for 13 values of `s` evenly spaced on `[-5, -1]`.
pub fn default_density_grid(peak: f64) -> Vec<f64> {
    linspace(-5.0, -1.0, 13)
        .into_iter()
        .map(|s| peak * 10f64.powf(s))
        .collect()
}

fn check_grid(u_grid: &[f64], n: usize) -> Result<(), EnvError> {
    if n < MIN_PROBE_SAMPLES {
        return Err(EnvError::InvalidParameters(format!(
            "probe needs at least {MIN_PROBE_SAMPLES} samples, got {n}"
        )));
    }
    if u_grid.is_empty() || u_grid.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
        return Err(EnvError::InvalidParameters(
            "probe grid must be nonempty and positive".into(),
        ));
    }
    if u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EnvError::InvalidParameters(
            "probe grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Fraction of `values` at most `u`, for each `u` in the grid.
fn empirical_cdf(mut values: Vec<f64>, u_grid: &[f64]) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    u_grid
        .iter()
        .map(|&u| values.partition_point(|&v| v <= u) as f64 / n)
        .collect()
}

fn log_log_slope(u_grid: &[f64], estimates: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = u_grid
        .iter()
        .zip(estimates)
        .filter(|(_, p)| **p > 0.0)
        .map(|(u, p)| (u.ln(), p.ln()))
        .unzip();
    ols_slope(&xs, &ys)
}

/// Estimates `P(f(X) <= u)` on `u_grid`, where `f` is the density of `dist`.
pub fn tail_exponent_probe<R: Rng + ?Sized>(
    dist: &ContextDistribution,
    u_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<ProbeResult, EnvError> {
    check_grid(u_grid, n_samples)?;
    let densities: Vec<f64> = (0..n_samples).map(|_| dist.pdf(&dist.sample(rng))).collect();
    let estimates = empirical_cdf(densities, u_grid);
    if estimates.iter().all(|&p| p == 0.0) {
        return Err(EnvError::DegenerateProbe);
    }
    let slope = log_log_slope(u_grid, &estimates);
    Ok(ProbeResult {
        u_grid: u_grid.to_vec(),
        estimates,
        slope,
    })
}

/// Estimates `P(0 < eta*(X) - eta_a(X) < u)` on `u_grid`.
pub fn margin_probe<R: Rng + ?Sized>(
    family: &RewardFamily,
    dist: &ContextDistribution,
    action: usize,
    u_grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<ProbeResult, EnvError> {
    check_grid(u_grid, n_samples)?;
    if action >= family.num_actions() {
        return Err(EnvError::InvalidParameters(format!(
            "action {action} out of range for {} actions",
            family.num_actions()
        )));
    }
    let n = n_samples as f64;
    let mut gaps: Vec<f64> = (0..n_samples)
        .map(|_| family.gap(action, &dist.sample(rng)))
        .filter(|&g| g > 0.0)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let estimates: Vec<f64> = u_grid
        .iter()
        .map(|&u| gaps.partition_point(|&g| g < u) as f64 / n)
        .collect();
    let slope = log_log_slope(u_grid, &estimates);
    Ok(ProbeResult {
        u_grid: u_grid.to_vec(),
        estimates,
        slope,
    })
}
