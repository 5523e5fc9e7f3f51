//! Stationary-Gaussian machinery on Toeplitz covariances.
//!
//! Both increment columns share one Durbin-Levinson pass over the
//! autocovariance, which yields the one-step prediction coefficients and
//! innovation variances. Likelihoods, exact simulation and whitened residuals
//! are all expressed through that innovations representation.

use nalgebra::{Matrix1x2, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acf::AcfVector;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Seed;
use crate::stats::LN_2PI;
use crate::trajectory::{IncrementMatrix, Trajectory};

/// Drift `mu` (microns per second) and scale matrix `Sigma` of the
/// location-scale model `X(t) = mu t + Sigma^{1/2} Z(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationScale {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

impl LocationScale {
    pub fn new(mu: [f64; 2], sigma: Matrix2<f64>) -> Result<Self> {
        let sigma = 0.5 * (sigma + sigma.transpose());
        if !linalg::is_pd2(&sigma) {
            return Err(Error::not_pd("scale matrix Sigma"));
        }
        Ok(Self { mu, sigma: [[sigma[(0, 0)], sigma[(0, 1)]], [sigma[(1, 0)], sigma[(1, 1)]]] })
    }

    /// From standard deviations and correlation.
    pub fn from_sds(mu: [f64; 2], s1: f64, s2: f64, rho: f64) -> Result<Self> {
        if !(s1 > 0.0 && s2 > 0.0) || !(rho.abs() < 1.0) {
            return Err(Error::invalid(format!("invalid scale parameters s1={s1}, s2={s2}, rho={rho}")));
        }
        Self::new(mu, Matrix2::new(s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2))
    }

    /// Zero drift and identity scale.
    pub fn standard() -> Self {
        Self { mu: [0.0, 0.0], sigma: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn sigma_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma[0][0], self.sigma[0][1], self.sigma[1][0], self.sigma[1][1])
    }

    pub fn mu_vector(&self) -> Vector2<f64> {
        Vector2::new(self.mu[0], self.mu[1])
    }

    /// `(sigma_1, sigma_2, rho)`.
    pub fn sds_and_corr(&self) -> (f64, f64, f64) {
        let s1 = self.sigma[0][0].sqrt();
        let s2 = self.sigma[1][1].sqrt();
        (s1, s2, self.sigma[0][1] / (s1 * s2))
    }
}

/// Whitened residuals, one row per increment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualMatrix {
    pub z: Vec<[f64; 2]>,
}

impl ResidualMatrix {
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.z.iter().map(|r| r[c]).collect()
    }
}

/// Streaming Durbin-Levinson recursion.
///
/// Calls `visit(i, phi_i, v_i)` for `i = 0..n`, where `phi_i[k-1]` is the
/// coefficient of `x_{i-k}` in the best linear predictor of `x_i` from its
/// past and `v_i` is the prediction error variance. Uses `O(n)` memory.
pub fn levinson<F>(gamma: &[f64], n: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &[f64], f64),
{
    if n == 0 {
        return Err(Error::invalid("need at least one observation"));
    }
    if gamma.len() < n {
        return Err(Error::invalid(format!("autocovariance has {} lags but {n} are needed", gamma.len())));
    }
    let mut phi = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut v = gamma[0];
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::not_pd(format!("innovation variance v_0 = {v}")));
    }
    visit(0, &[], v);
    for i in 1..n {
        let acc: f64 = phi[..i - 1].iter().zip(gamma[1..i].iter().rev()).map(|(p, g)| p * g).sum();
        let kappa = (gamma[i] - acc) / v;
        prev[..i - 1].copy_from_slice(&phi[..i - 1]);
        for k in 0..i - 1 {
            phi[k] = prev[k] - kappa * prev[i - 2 - k];
        }
        phi[i - 1] = kappa;
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::not_pd(format!("innovation variance v_{i} = {v}")));
        }
        visit(i, &phi[..i], v);
    }
    Ok(())
}

/// Stored Durbin-Levinson factorization `V = L D L'` with `L^{-1}` given by the
/// prediction coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct DlFactor {
    /// Row `i` holds the `i` prediction coefficients of `x_i`.
    pub coeffs: Vec<Vec<f64>>,
    /// Innovation variances `v_0..v_{n-1}`.
    pub v: Vec<f64>,
}

pub fn dl_factor(acf: &AcfVector, n: usize) -> Result<DlFactor> {
    let mut coeffs = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    levinson(&acf.gamma, n, |_, phi, vi| {
        coeffs.push(phi.to_vec());
        v.push(vi);
    })?;
    Ok(DlFactor { coeffs, v })
}

fn predict(phi: &[f64], past: &[f64]) -> f64 {
    phi.iter().zip(past.iter().rev()).map(|(p, x)| p * x).sum()
}

impl DlFactor {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn log_det(&self) -> f64 {
        self.v.iter().map(|v| v.ln()).sum()
    }

    /// Standardized one-step prediction errors `(x_i - E[x_i | past]) / sqrt(v_i)`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| (x[i] - predict(&self.coeffs[i], &x[..i])) / self.v[i].sqrt())
            .collect()
    }

    /// Inverse of [`DlFactor::whiten`]: maps iid standard normals to a series
    /// with the factorized covariance.
    pub fn color(&self, eps: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let m = predict(&self.coeffs[i], &z[..i]);
            z.push(m + self.v[i].sqrt() * eps[i]);
        }
        z
    }
}

/// Generalized least-squares cross-products of `[Y | X]` with `X` the
/// constant `dt` column, `Y` the two increment columns and `V` the Toeplitz
/// covariance: `s = Y'V^{-1}Y`, `u = X'V^{-1}Y`, `t = X'V^{-1}X`.
///
/// These are additive over the innovations, so statistics of consecutive
/// blocks computed with conditional innovations sum to the full-data ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub n: usize,
    pub s: [[f64; 2]; 2],
    pub u: [f64; 2],
    pub t: f64,
    /// `log |V|`.
    pub log_det_v: f64,
}

impl SufficientStats {
    pub fn s_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.s[0][0], self.s[0][1], self.s[1][0], self.s[1][1])
    }

    pub fn u_row(&self) -> Matrix1x2<f64> {
        Matrix1x2::new(self.u[0], self.u[1])
    }

    /// Statistics restricted to innovations `from..to`.
    pub fn of_range(x: &IncrementMatrix, acf: &AcfVector, from: usize, to: usize) -> Result<Self> {
        let n = x.len();
        if from > to || to > n {
            return Err(Error::invalid(format!("innovation range {from}..{to} outside 0..{n}")));
        }
        let y0 = x.column(0);
        let y1 = x.column(1);
        let dt = x.dt;
        let mut st = SufficientStats { n: to - from, s: [[0.0; 2]; 2], u: [0.0; 2], t: 0.0, log_det_v: 0.0 };
        levinson(&acf.gamma, to.max(1), |i, phi, v| {
            if i < from {
                return;
            }
            let e0 = y0[i] - predict(phi, &y0[..i]);
            let e1 = y1[i] - predict(phi, &y1[..i]);
            let ex = dt * (1.0 - phi.iter().sum::<f64>());
            let w = 1.0 / v;
            st.s[0][0] += w * e0 * e0;
            st.s[0][1] += w * e0 * e1;
            st.s[1][1] += w * e1 * e1;
            st.u[0] += w * ex * e0;
            st.u[1] += w * ex * e1;
            st.t += w * ex * ex;
            st.log_det_v += v.ln();
        })?;
        st.s[1][0] = st.s[0][1];
        Ok(st)
    }

    pub fn compute(x: &IncrementMatrix, acf: &AcfVector) -> Result<Self> {
        Self::of_range(x, acf, 0, x.len())
    }

    /// Residual cross-product `(Y - X beta)' V^{-1} (Y - X beta)`.
    pub fn residual_crossprod(&self, beta: &Vector2<f64>) -> Matrix2<f64> {
        let u = self.u_row();
        let b = beta.transpose();
        self.s_matrix() - u.transpose() * b - b.transpose() * u + self.t * b.transpose() * b
    }
}

/// Matrix-normal log-likelihood of the increments under `(mu, Sigma)` and the
/// Toeplitz covariance `acf`.
pub fn loglik(x: &IncrementMatrix, ls: &LocationScale, acf: &AcfVector) -> Result<f64> {
    let st = SufficientStats::compute(x, acf)?;
    loglik_from_stats(&st, ls)
}

pub fn loglik_from_stats(st: &SufficientStats, ls: &LocationScale) -> Result<f64> {
    let sigma = ls.sigma_matrix();
    let chol = linalg::chol2(&sigma)?;
    let log_det_sigma = 2.0 * (chol[(0, 0)].ln() + chol[(1, 1)].ln());
    let r = st.residual_crossprod(&ls.mu_vector());
    let sigma_inv = sigma.try_inverse().ok_or_else(|| Error::not_pd("scale matrix Sigma"))?;
    let tr = (sigma_inv * r).trace();
    let n = st.n as f64;
    Ok(-0.5 * (tr + n * log_det_sigma + 2.0 * st.log_det_v) - n * LN_2PI)
}

/// Maximum-likelihood `(mu, Sigma)` for fixed kernel, and the profile log-likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub ls: LocationScale,
    pub loglik: f64,
}

pub fn profile_mle(x: &IncrementMatrix, acf: &AcfVector) -> Result<ProfileFit> {
    if x.len() < 2 {
        return Err(Error::data("profile likelihood needs at least two increments"));
    }
    let st = SufficientStats::compute(x, acf)?;
    profile_from_stats(&st)
}

pub fn profile_from_stats(st: &SufficientStats) -> Result<ProfileFit> {
    if !(st.t > 0.0) {
        return Err(Error::numerical("singular design cross-product"));
    }
    let beta = st.u_row() / st.t;
    let s = st.s_matrix() - st.u_row().transpose() * st.u_row() / st.t;
    let n = st.n as f64;
    let sigma_hat = s / n;
    let log_det = linalg::logdet2(&sigma_hat).map_err(|_| Error::data("residual cross-product is degenerate"))?;
    let q = 2.0;
    let loglik = -0.5 * (n * q + n * log_det + q * st.log_det_v) - 0.5 * n * q * LN_2PI;
    Ok(ProfileFit { ls: LocationScale::new([beta[0], beta[1]], sigma_hat)?, loglik })
}

/// Exact draw of `n_steps` increments from the location-scale model.
pub fn simulate_increments<R: Rng + ?Sized>(
    ls: &LocationScale,
    acf: &AcfVector,
    n_steps: usize,
    rng: &mut R,
) -> Result<IncrementMatrix> {
    let chol = linalg::chol2(&ls.sigma_matrix())?;
    let mut z0 = Vec::with_capacity(n_steps);
    let mut z1 = Vec::with_capacity(n_steps);
    levinson(&acf.gamma, n_steps, |i, phi, v| {
        let sd = v.sqrt();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let m0 = predict(phi, &z0[..i]);
        let m1 = predict(phi, &z1[..i]);
        z0.push(m0 + sd * e0);
        z1.push(m1 + sd * e1);
    })?;
    let dt = acf.dt;
    let rows = z0
        .iter()
        .zip(&z1)
        .map(|(&a, &b)| {
            [
                dt * ls.mu[0] + chol[(0, 0)] * a,
                dt * ls.mu[1] + chol[(1, 0)] * a + chol[(1, 1)] * b,
            ]
        })
        .collect();
    IncrementMatrix::new(dt, rows)
}

/// Exact simulation of a trajectory starting at the origin.
pub fn simulate(ls: &LocationScale, acf: &AcfVector, n_steps: usize, seed: Seed) -> Result<Trajectory> {
    let mut rng = seed.rng();
    Ok(simulate_increments(ls, acf, n_steps, &mut rng)?.integrate("simulated"))
}

/// Conditionally iid standard-normal residuals `Z = V^{-1/2}(x - dt mu) Sigma^{-1/2}`:
/// projection on the eigenvectors of `Sigma` (major axis first), scaling by the
/// inverse root eigenvalues, then innovations whitening along time.
pub fn residuals(x: &IncrementMatrix, ls: &LocationScale, acf: &AcfVector) -> Result<ResidualMatrix> {
    let sigma = ls.sigma_matrix();
    if !linalg::is_pd2(&sigma) {
        return Err(Error::not_pd("scale matrix Sigma"));
    }
    let (vals, vecs) = linalg::sym2_eigen(&sigma);
    let dt = x.dt;
    let mut cols = [Vec::with_capacity(x.len()), Vec::with_capacity(x.len())];
    for r in &x.rows {
        let c = Vector2::new(r[0] - dt * ls.mu[0], r[1] - dt * ls.mu[1]);
        for k in 0..2 {
            cols[k].push(vecs.column(k).dot(&c) / vals[k].sqrt());
        }
    }
    let mut z = vec![[0.0; 2]; x.len()];
    levinson(&acf.gamma, x.len(), |i, phi, v| {
        let sd = v.sqrt();
        for k in 0..2 {
            z[i][k] = (cols[k][i] - predict(phi, &cols[k][..i])) / sd;
        }
    })?;
    Ok(ResidualMatrix { z })
}
