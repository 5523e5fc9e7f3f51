//! Prior and posterior predictive diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{self, PosteriorGrid};
use crate::error::{Error, Result};
use crate::gausslik::{self, ResidualMatrix};
use crate::rng::Seed;
use crate::selection::{self, PreparedModel};
use crate::stats;
use crate::trajectory::{self, IncrementMatrix, MsdCombine, MsdCurve, Trajectory};

/// Default number of predictive replicates.
pub const DEFAULT_REPLICATES: usize = 100;

/// Test statistic: detrended pathwise MSD at a lag given in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdStatistic {
    pub lag_s: f64,
}

impl MsdStatistic {
    pub fn name(&self) -> String {
        format!("msd@{}s", self.lag_s)
    }

    /// Lag in steps (nearest integer, at least one).
    pub fn lag_steps(&self, dt: f64) -> usize {
        ((self.lag_s / dt).round() as usize).max(1)
    }
}

/// Detrended MSD at the statistics' lags, computed exactly as [`trajectory::pathwise_msd`].
pub fn msd_statistics(traj: &Trajectory, stats: &[MsdStatistic]) -> Result<Vec<f64>> {
    let lags: Vec<usize> = stats.iter().map(|s| s.lag_steps(traj.dt())).collect();
    Ok(trajectory::msd_at_lags(traj, &lags, true, MsdCombine::Mean)?.values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub statistic: String,
    pub observed: f64,
    pub replicates: Vec<f64>,
    /// Fraction of replicates strictly above the observed value.
    pub p_greater: f64,
    /// Fraction of replicates at or above the observed value.
    pub p_geq: f64,
    /// Ties counted as exceedances with probability one half.
    pub p_value: f64,
}

impl PredictiveResult {
    fn new<R: Rng + ?Sized>(statistic: String, observed: f64, replicates: Vec<f64>, rng: &mut R) -> Self {
        let r = replicates.len().max(1) as f64;
        let gt = replicates.iter().filter(|&&t| t > observed).count();
        let ties = replicates.iter().filter(|&&t| t == observed).count();
        let coin = (0..ties).filter(|_| rng.random_bool(0.5)).count();
        Self {
            statistic,
            observed,
            p_greater: gt as f64 / r,
            p_geq: (gt + ties) as f64 / r,
            p_value: (gt + coin) as f64 / r,
            replicates,
        }
    }
}

/// Grid posterior of `x` and `r` posterior draws as (node, location-scale) pairs.
fn posterior_draws(model: &PreparedModel, x: &IncrementMatrix, r: usize, seed: Seed) -> Result<(PosteriorGrid, Vec<(usize, gausslik::LocationScale)>)> {
    let g = model.posterior(x)?;
    let draws = conjugate::sample_posterior_nodes(&g, r, &mut seed.named("posterior").rng())?;
    Ok((g, draws))
}

/// Ensemble of detrended MSD curves from paths simulated under parameters
/// drawn from the model's prior.
pub fn prior_predictive_msd(
    model: &PreparedModel,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    max_lag: usize,
    seed: Seed,
) -> Result<Vec<MsdCurve>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let s = seed.child(i as u64);
            let theta = model.sample_prior(&mut s.named("prior").rng())?;
            let x = selection::simulate_from(model, &theta, n_steps, dt, s.named("data"))?;
            trajectory::pathwise_msd(&x.integrate(format!("prior-{i}")), max_lag, true)
        })
        .collect()
}

/// Posterior predictive p-values of detrended MSD statistics.
pub fn posterior_predictive_pvalue(
    x_obs: &IncrementMatrix,
    model: &PreparedModel,
    stats_: &[MsdStatistic],
    r: usize,
    seed: Seed,
) -> Result<Vec<PredictiveResult>> {
    let n = x_obs.len();
    if let Some(s) = stats_.iter().find(|s| s.lag_steps(x_obs.dt) > n) {
        return Err(Error::invalid(format!("lag {} s exceeds the trajectory length", s.lag_s)));
    }
    let observed = msd_statistics(&x_obs.integrate("observed"), stats_)?;
    let (_, draws) = posterior_draws(model, x_obs, r, seed)?;
    let reps: Vec<Vec<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(k, (node, ls))| {
            let acf = model.grid.acf_at(*node, x_obs.dt, n)?;
            let x = gausslik::simulate_increments(ls, &acf, n, &mut seed.child(k as u64).rng())?;
            msd_statistics(&x.integrate("replicate"), stats_)
        })
        .collect::<Result<_>>()?;
    let mut tie_rng = seed.named("ties").rng();
    Ok(stats_
        .iter()
        .enumerate()
        .map(|(j, s)| PredictiveResult::new(s.name(), observed[j], reps.iter().map(|v| v[j]).collect(), &mut tie_rng))
        .collect())
}

/// Realized-discrepancy KS p-values of the residuals, one per column
/// (major then minor eigen-direction of `Sigma`).
pub fn residual_pvalue_ks(x_obs: &IncrementMatrix, model: &PreparedModel, r: usize, seed: Seed) -> Result<[PredictiveResult; 2]> {
    let n = x_obs.len();
    let (_, draws) = posterior_draws(model, x_obs, r, seed)?;
    let pairs: Vec<[(f64, f64); 2]> = draws
        .par_iter()
        .enumerate()
        .map(|(k, (node, ls))| {
            let acf = model.grid.acf_at(*node, x_obs.dt, n)?;
            let z_obs = gausslik::residuals(x_obs, ls, &acf)?;
            let x = gausslik::simulate_increments(ls, &acf, n, &mut seed.child(k as u64).rng())?;
            let z_sim = gausslik::residuals(&x, ls, &acf)?;
            Ok([0, 1].map(|c| (stats::ks_distance_normal(&z_obs.column(c)), stats::ks_distance_normal(&z_sim.column(c)))))
        })
        .collect::<Result<_>>()?;
    let mut tie_rng = seed.named("ties").rng();
    Ok([0, 1].map(|c| {
        // Realized discrepancy: compare each simulated KS with its own observed KS.
        let r = pairs.len().max(1) as f64;
        let gt = pairs.iter().filter(|p| p[c].1 > p[c].0).count();
        let ties = pairs.iter().filter(|p| p[c].1 == p[c].0).count();
        let coin = (0..ties).filter(|_| tie_rng.random_bool(0.5)).count();
        let observed = pairs.iter().map(|p| p[c].0).sum::<f64>() / r;
        PredictiveResult {
            statistic: format!("ks_z{}", c + 1),
            observed,
            replicates: pairs.iter().map(|p| p[c].1).collect(),
            p_greater: gt as f64 / r,
            p_geq: (gt + ties) as f64 / r,
            p_value: (gt + coin) as f64 / r,
        }
    }))
}

/// Residual matrices of the observed data at `n_draws` posterior draws.
pub fn residual_draws(x_obs: &IncrementMatrix, model: &PreparedModel, n_draws: usize, seed: Seed) -> Result<Vec<ResidualMatrix>> {
    let (_, draws) = posterior_draws(model, x_obs, n_draws, seed)?;
    draws
        .iter()
        .map(|(node, ls)| gausslik::residuals(x_obs, ls, &model.grid.acf_at(*node, x_obs.dt, x_obs.len())?))
        .collect()
}

/// Kernel density of each residual draw's pooled values on an evenly spaced grid.
pub fn residual_density(draws: &[ResidualMatrix], grid: &[f64]) -> Vec<Vec<f64>> {
    draws
        .iter()
        .map(|z| {
            let pooled: Vec<f64> = z.z.iter().flat_map(|r| r.iter().copied()).collect();
            stats::gaussian_kde(&pooled, grid)
        })
        .collect()
}

/// Multiplies alternating blocks of increments by `low` and `high`, producing
/// two-state variance switching.
pub fn inject_variance_switching(x: &IncrementMatrix, block: usize, low: f64, high: f64) -> IncrementMatrix {
    let rows = x
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let f = if (i / block.max(1)).is_multiple_of(2) { low } else { high };
            [f * r[0], f * r[1]]
        })
        .collect();
    IncrementMatrix { dt: x.dt, rows }
}
