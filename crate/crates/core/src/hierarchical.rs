//! Approximate hierarchical fit producing a data-driven conjugate prior.
//!
//! The pipeline is: independent grid posteriors per trajectory, a normal
//! approximation of each in transformed coordinates, a blocked Gibbs sampler
//! for the multilevel-normal model (with a Metropolis correction for the base
//! prior), draws from the implied prior, and a moment-matched MNIW form.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{self, GridSpec, MniwParams, ModelGrid, PriorSpec, Axis, Q};
use crate::error::{Error, Result};
use crate::gausslik::LocationScale;
use crate::linalg;
use crate::model::{ModelFamily, Theta, Vartheta};
use crate::rng::Seed;
use crate::stats;
use crate::trajectory::IncrementMatrix;

/// Smallest and largest admissible GLE exponent `gamma` when inverting the transform.
const GAMMA_RANGE: (f64, f64) = (0.5, 200.0);

/// Dimension of the transformed parameter.
pub fn dim(family: ModelFamily) -> usize {
    family.vartheta_dim() + 5
}

/// Maps `theta` to transformed coordinates:
/// fBM `(H, mu1, mu2, log s1, log s2, rho)`,
/// GLE `(log(tau)/gamma, log tau, mu1, mu2, log s1, log s2, rho)`.
pub fn to_transformed(theta: &Theta) -> DVector<f64> {
    let (s1, s2, rho) = theta.ls.sds_and_corr();
    let mut v: Vec<f64> = match theta.vartheta {
        Vartheta::Fbm { hurst } => vec![hurst],
        Vartheta::Gle { alpha, log_tau } => vec![alpha * log_tau, log_tau],
    };
    v.extend([theta.ls.mu[0], theta.ls.mu[1], s1.ln(), s2.ln(), rho]);
    DVector::from_vec(v)
}

/// Grid coordinates of the kernel block of a transformed vector, if admissible.
pub fn vartheta_coords(family: ModelFamily, v: &[f64]) -> Option<Vec<f64>> {
    match family {
        ModelFamily::Fbm => (v[0] > 0.0 && v[0] < 1.0).then(|| vec![v[0]]),
        ModelFamily::Gle { .. } => {
            let lt = v[1];
            if lt == 0.0 {
                return None;
            }
            let alpha = v[0] / lt;
            let ok = alpha > 1.0 / GAMMA_RANGE.1 && alpha < 1.0 / GAMMA_RANGE.0 && lt.is_finite();
            ok.then(|| vec![alpha, lt])
        }
    }
}

/// Inverse of [`to_transformed`]; `None` outside the parameter space.
pub fn from_transformed(family: ModelFamily, v: &[f64]) -> Option<Theta> {
    let k = family.vartheta_dim();
    let coords = vartheta_coords(family, v)?;
    let r = &v[k..];
    if !(r[4].abs() < 1.0) {
        return None;
    }
    let ls = LocationScale::from_sds([r[0], r[1]], r[2].exp(), r[3].exp(), r[4]).ok()?;
    Some(Theta { vartheta: family.vartheta(&coords).ok()?, ls })
}

/// Log density, up to a constant, of the default prior expressed in
/// transformed coordinates. `-inf` outside the support.
pub fn default_base_log_density(family: ModelFamily, v: &[f64]) -> f64 {
    let k = family.vartheta_dim();
    let rho = v[k + 4];
    if !(rho.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let scale = -1.5 * (1.0 - rho * rho).ln();
    match vartheta_coords(family, v) {
        None => f64::NEG_INFINITY,
        Some(c) => match family {
            ModelFamily::Fbm => scale,
            ModelFamily::Gle { .. } => {
                if !(c[0] > 0.0 && c[0] < 2.0) {
                    return f64::NEG_INFINITY;
                }
                scale
                    + stats::normal_ln_pdf(c[1], conjugate::LOG_TAU_PRIOR_MEAN, conjugate::LOG_TAU_PRIOR_SD)
                    - c[1].abs().ln()
            }
        },
    }
}

/// Base prior `g0` on transformed coordinates used by the Metropolis step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaseDensity {
    Flat,
    Default,
}

impl BaseDensity {
    fn log_density(&self, family: ModelFamily, v: &[f64]) -> f64 {
        match self {
            BaseDensity::Flat => 0.0,
            BaseDensity::Default => default_base_log_density(family, v),
        }
    }
}

/// Gaussian summary of one trajectory's posterior in transformed coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalApprox {
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<f64>,
}

impl NormalApprox {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::cholesky_lower(&cov, "normal approximation covariance")?;
        let d = mean.len();
        Ok(Self { mean: mean.as_slice().to_vec(), cov: (0..d * d).map(|i| cov[(i / d, i % d)]).collect() })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_mat(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.cov)
    }

    /// Fits mean and covariance to draws, regularizing a near-singular covariance.
    pub fn fit(draws: &[DVector<f64>]) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::invalid("need at least two draws for a normal approximation"));
        }
        let (mean, mut cov) = linalg::mean_and_cov(draws);
        let d = mean.len();
        let tr = cov.trace();
        let min_eig = cov.clone().symmetric_eigenvalues().min();
        if min_eig < 1e-12 * tr {
            for i in 0..d {
                cov[(i, i)] += 1e-10 * tr / d as f64;
            }
        }
        Self::new(mean, cov)
    }
}

/// Step one: for each dataset, grid posterior under `prior`, `m` posterior
/// draws, and their normal approximation in transformed coordinates. Each
/// dataset uses the child seed of its index.
pub fn independent_posteriors(
    data: &[IncrementMatrix],
    grid: &ModelGrid,
    prior: &PriorSpec,
    m: usize,
    seed: Seed,
) -> Result<Vec<NormalApprox>> {
    data.par_iter()
        .enumerate()
        .map(|(j, x)| {
            let g = conjugate::grid_posterior(x, grid, prior)?;
            let draws = conjugate::sample_posterior(&g, m, seed.child(j as u64))?;
            let tv: Vec<DVector<f64>> = draws.iter().map(to_transformed).collect();
            NormalApprox::fit(&tv)
        })
        .collect()
}

/// What the scatter matrix of the `Omega0` update is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scatter {
    /// Current augmented draws `theta_j` (the blocked multilevel update).
    #[default]
    Draws,
    /// The fixed normal-approximation means `lambda_j`.
    Means,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Hyperprior exponent; `None` means `d + 1`.
    pub omega: Option<f64>,
    pub n_iter: usize,
    pub n_burn: usize,
    pub base: BaseDensity,
    pub scatter: Scatter,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { omega: None, n_iter: 10_000, n_burn: 2_000, base: BaseDensity::Default, scatter: Scatter::Draws }
    }
}

/// Retained Gibbs states and diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierDraws {
    pub family: ModelFamily,
    pub dim: usize,
    pub omega: f64,
    pub n_burn: usize,
    /// One `lambda0` per retained iteration.
    pub lambda0: Vec<Vec<f64>>,
    /// Row-major `Omega0` per retained iteration.
    pub omega0: Vec<Vec<f64>>,
    /// Metropolis acceptance rate per dataset.
    pub acceptance: Vec<f64>,
    /// Effective sample size of each `lambda0` component.
    pub ess_lambda0: Vec<f64>,
}

impl HierDraws {
    pub fn len(&self) -> usize {
        self.lambda0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda0.is_empty()
    }

    pub fn omega0_mat(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.omega0[i])
    }

    /// Posterior mean and standard deviation of `lambda0[k]`.
    pub fn lambda0_summary(&self, k: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.lambda0.iter().map(|l| l[k]).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, v.sqrt())
    }

    /// Minimum Metropolis acceptance rate, flagged when below 1%.
    pub fn low_acceptance(&self) -> bool {
        self.acceptance.iter().any(|&a| a < 0.01)
    }
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d * d).map(|i| m[(i / d, i % d)]).collect()
}

/// Blocked Gibbs sampler for `theta_j ~ N(lambda0, Omega0)` given normal
/// approximations `N(lambda_j, Omega_j)` of the individual posteriors.
pub fn gibbs_fit(
    family: ModelFamily,
    approxes: &[NormalApprox],
    config: &GibbsConfig,
    seed: Seed,
) -> Result<HierDraws> {
    let t = approxes.len();
    let d = dim(family);
    if approxes.iter().any(|a| a.dim() != d) {
        return Err(Error::invalid(format!("normal approximations must have dimension {d}")));
    }
    if t <= d + 2 {
        return Err(Error::invalid(format!("need more than {} datasets for {d} parameters, got {t}", d + 2)));
    }
    let omega = config.omega.unwrap_or(d as f64 + 1.0);
    let tf = t as f64;
    let mut rng = seed.rng();

    let lam: Vec<DVector<f64>> = approxes.iter().map(NormalApprox::mean_vec).collect();
    let prec: Vec<DMatrix<f64>> = approxes
        .iter()
        .map(|a| linalg::inverse_spd(&a.cov_mat(), "normal approximation covariance"))
        .collect::<Result<_>>()?;
    let prec_lam: Vec<DVector<f64>> = prec.iter().zip(&lam).map(|(p, l)| p * l).collect();

    let mut theta = lam.clone();
    let mut log_g0: Vec<f64> = theta.iter().map(|v| config.base.log_density(family, v.as_slice())).collect();
    let (mut lambda0, mut omega0) = linalg::mean_and_cov(&theta);
    let mut accepted = vec![0usize; t];

    let total = config.n_burn + config.n_iter;
    let mut out_l = Vec::with_capacity(config.n_iter);
    let mut out_o = Vec::with_capacity(config.n_iter);
    for it in 0..total {
        let p0 = linalg::inverse_spd(&omega0, "Omega0").map_err(|_| {
            Error::numerical(format!("Omega0 became singular at iteration {it}: the between-dataset spread collapsed"))
        })?;
        let p0l = &p0 * &lambda0;
        for j in 0..t {
            let p = &prec[j] + &p0;
            let chol = nalgebra::Cholesky::new(linalg::symmetrize(&p)).ok_or_else(|| Error::not_pd("conditional precision"))?;
            let mean = chol.solve(&(&prec_lam[j] + &p0l));
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let step = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::numerical("singular conditional precision"))?;
            let prop = mean + step;
            let lg = config.base.log_density(family, prop.as_slice());
            let accept = if matches!(config.base, BaseDensity::Flat) {
                true
            } else if !lg.is_finite() {
                false
            } else {
                let u: f64 = rng.random();
                u.ln() < log_g0[j] - lg
            };
            if accept {
                theta[j] = prop;
                log_g0[j] = lg;
                accepted[j] += 1;
            }
        }
        let (tbar, cov) = linalg::mean_and_cov(&theta);
        let scatter = match config.scatter {
            Scatter::Draws => cov,
            Scatter::Means => linalg::mean_and_cov(&lam).1,
        } * (tf - 1.0);
        let collapsed = |_| {
            Error::numerical(format!(
                "Omega0 became singular at iteration {it}: the between-dataset spread collapsed \
                 (individual posteriors too wide relative to their dispersion; the means scatter avoids this)"
            ))
        };
        omega0 = stats::sample_inverse_wishart(&scatter, tf - 1.0 + omega, &mut rng).map_err(collapsed)?;
        let chol = linalg::cholesky_lower(&(&omega0 / tf), "Omega0 / T").map_err(collapsed)?;
        lambda0 = stats::sample_mvn(&tbar, &chol, &mut rng);
        if it >= config.n_burn {
            out_l.push(lambda0.as_slice().to_vec());
            out_o.push(flatten(&omega0));
        }
    }
    let ess = (0..d)
        .map(|k| stats::effective_sample_size(&out_l.iter().map(|l| l[k]).collect::<Vec<_>>()))
        .collect();
    Ok(HierDraws {
        family,
        dim: d,
        omega,
        n_burn: config.n_burn,
        lambda0: out_l,
        omega0: out_o,
        acceptance: accepted.iter().map(|&a| a as f64 / total as f64).collect(),
        ess_lambda0: ess,
    })
}

/// One draw `theta ~ N(lambda0, Omega0)` per retained hyperparameter state.
pub fn test_prior_draws(h: &HierDraws, seed: Seed) -> Result<Vec<DVector<f64>>> {
    let mut rng = seed.rng();
    (0..h.len())
        .map(|i| {
            let chol = linalg::cholesky_lower(&h.omega0_mat(i), "Omega0")?;
            Ok(stats::sample_mvn(&DVector::from_column_slice(&h.lambda0[i]), &chol, &mut rng))
        })
        .collect()
}

/// `E[w_k exp(a'w)]` for `w ~ N(m, v)`: `(m_k + (v a)_k) exp(a'm + a'v a / 2)`.
pub fn tilted_moment(m: &DVector<f64>, v: &DMatrix<f64>, a: &DVector<f64>, k: usize) -> f64 {
    let va = v * a;
    (m[k] + va[k]) * (a.dot(m) + 0.5 * a.dot(&va)).exp()
}

/// Data-driven prior in conjugate form: a normal marginal on the transformed
/// kernel block and, given it, an MNIW prior on `(mu, Sigma)` moment-matched
/// to the conditional of a normal fitted to all transformed coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPrior {
    pub family: ModelFamily,
    /// Mean of the fitted normal.
    pub mean: Vec<f64>,
    /// Row-major covariance of the fitted normal.
    pub cov: Vec<f64>,
    /// Moment-matched inverse-Wishart degrees of freedom (constant in the kernel).
    pub nu: f64,
}

impl TestPrior {
    /// Builds the prior from the moments of the transformed parameter.
    pub fn from_moments(family: ModelFamily, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = dim(family);
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid(format!("expected {d}-dimensional moments")));
        }
        linalg::cholesky_lower(&cov, "test prior covariance")?;
        let mut tp = TestPrior {
            family,
            mean: mean.as_slice().to_vec(),
            cov: flatten(&linalg::symmetrize(&cov)),
            nu: 0.0,
        };
        let (_, vc) = tp.conditional_parts();
        let s: f64 = (0..Q).map(|i| 1.0 / ((4.0 * vc[(2 + i, 2 + i)]).exp() - 1.0)).sum();
        let nu = Q as f64 + 3.0 + 2.0 / Q as f64 * s;
        if !(nu > Q as f64 + 1.0) || !nu.is_finite() {
            return Err(Error::numerical(format!("moment-matched degrees of freedom {nu} are degenerate")));
        }
        tp.nu = nu;
        Ok(tp)
    }

    /// Synthetic prior for simulation studies, specified by kernel-parameter
    /// means and standard deviations (`H` for fBM; `alpha` and `log tau` for
    /// the GLE) plus common location-scale moments.
    pub fn synthetic(family: ModelFamily, kernel: &[(f64, f64)], ls: &SyntheticScale) -> Result<Self> {
        let d = dim(family);
        let k = family.vartheta_dim();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        match family {
            ModelFamily::Fbm => {
                mean[0] = kernel[0].0;
                cov[(0, 0)] = kernel[0].1.powi(2);
            }
            ModelFamily::Gle { .. } => {
                let ((a, sa), (l, sl)) = (kernel[0], kernel[1]);
                // delta-method moments of (alpha log tau, log tau)
                mean[0] = a * l;
                mean[1] = l;
                cov[(0, 0)] = l * l * sa * sa + a * a * sl * sl;
                cov[(0, 1)] = a * sl * sl;
                cov[(1, 0)] = a * sl * sl;
                cov[(1, 1)] = sl * sl;
            }
        }
        for i in 0..2 {
            cov[(k + i, k + i)] = ls.mu_sd.powi(2);
            mean[k + 2 + i] = ls.log_sigma;
            cov[(k + 2 + i, k + 2 + i)] = ls.log_sigma_sd.powi(2);
        }
        mean[k + 4] = ls.rho;
        cov[(k + 4, k + 4)] = ls.rho_sd.powi(2);
        Self::from_moments(family, mean, cov)
    }

    pub fn mean_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_mat(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        DMatrix::from_row_slice(d, d, &self.cov)
    }

    fn k(&self) -> usize {
        self.family.vartheta_dim()
    }

    /// Regression gain and covariance of the location-scale block given the kernel block.
    fn conditional_parts(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.k();
        let d = self.mean.len();
        let v = self.cov_mat();
        let vkk = v.view((0, 0), (k, k)).into_owned();
        let vrk = v.view((k, 0), (d - k, k)).into_owned();
        let vrr = v.view((k, k), (d - k, d - k)).into_owned();
        let vkk_inv = vkk.try_inverse().unwrap_or_else(|| DMatrix::zeros(k, k));
        let gain = &vrk * vkk_inv;
        let vc = linalg::symmetrize(&(vrr - &gain * vrk.transpose()));
        (gain, vc)
    }

    /// Transformed kernel block for grid coordinates.
    pub fn kernel_block(&self, coords: &[f64]) -> DVector<f64> {
        match self.family {
            ModelFamily::Fbm => DVector::from_vec(vec![coords[0]]),
            ModelFamily::Gle { .. } => DVector::from_vec(vec![coords[0] * coords[1], coords[1]]),
        }
    }

    /// Conditional normal moments of `(mu1, mu2, log s1, log s2, rho)` at grid coordinates.
    pub fn conditional(&self, coords: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k();
        let m = self.mean_vec();
        let (gain, vc) = self.conditional_parts();
        let mk = m.rows(0, k).into_owned();
        let mr = m.rows(k, m.len() - k).into_owned();
        (mr + gain * (self.kernel_block(coords) - mk), vc)
    }

    /// Log prior density of the kernel parameter in grid coordinates.
    pub fn log_vartheta_density(&self, coords: &[f64]) -> f64 {
        let k = self.k();
        let v = self.cov_mat().view((0, 0), (k, k)).into_owned();
        let m = self.mean_vec().rows(0, k).into_owned();
        let Some(chol) = nalgebra::Cholesky::new(v) else {
            return f64::NEG_INFINITY;
        };
        let r = self.kernel_block(coords) - m;
        let quad = r.dot(&chol.solve(&r));
        let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let base = -0.5 * (k as f64 * stats::LN_2PI + logdet + quad);
        match self.family {
            ModelFamily::Fbm => base,
            ModelFamily::Gle { .. } => base + coords[1].abs().ln(),
        }
    }

    /// Moment-matched MNIW prior of `(mu, Sigma)` at grid coordinates.
    pub fn mniw_at(&self, coords: &[f64]) -> Result<MniwParams> {
        let (mc, vc) = self.conditional(coords);
        let e = |i: usize| (2.0 * mc[2 + i] + 2.0 * vc[(2 + i, 2 + i)]).exp();
        let (e1, e2) = (e(0), e(1));
        let w = mc.rows(2, 3).into_owned();
        let wv = vc.view((2, 2), (3, 3)).into_owned();
        let e12 = tilted_moment(&w, &wv, &DVector::from_vec(vec![1.0, 1.0, 0.0]), 2);
        let sigma_bar = Matrix2::new(e1, e12, e12, e2);
        let psi = sigma_bar * (self.nu - Q as f64 - 1.0);
        if !linalg::is_pd2(&psi) {
            return Err(Error::numerical(format!("moment-matched scale is not positive definite at {coords:?}")));
        }
        let upsilon = 0.5 * (vc[(0, 0)] / e1 + vc[(1, 1)] / e2);
        Ok(MniwParams::new([mc[0], mc[1]], 1.0 / upsilon, psi, self.nu))
    }

    /// Grid over a box of `+- 6` prior standard deviations, clipped to the default box.
    pub fn adapted_grid(&self, n_per_axis: usize) -> Result<GridSpec> {
        let v = self.cov_mat();
        let dflt = GridSpec::default_for(self.family).axes();
        let clip = |lo: f64, hi: f64, ax: &Axis| Axis::new(lo.max(ax.lo), hi.min(ax.hi), n_per_axis);
        match self.family {
            ModelFamily::Fbm => {
                let (m, s) = (self.mean[0], v[(0, 0)].sqrt());
                Ok(GridSpec::Fbm { hurst: clip(m - 6.0 * s, m + 6.0 * s, &dflt[0])? })
            }
            ModelFamily::Gle { .. } => {
                let (ml, sl) = (self.mean[1], v[(1, 1)].sqrt());
                let log_tau = clip(ml - 6.0 * sl, ml + 6.0 * sl, &dflt[1])?;
                // alpha = u / log tau has no closed-form range; use extreme quantiles of draws.
                let mut rng = Seed(0x5eed).rng();
                let chol = linalg::cholesky_lower(&v.view((0, 0), (2, 2)).into_owned(), "kernel covariance")?;
                let m = DVector::from_column_slice(&self.mean[..2]);
                let mut alphas: Vec<f64> = (0..20_000)
                    .filter_map(|_| {
                        let u = stats::sample_mvn(&m, &chol, &mut rng);
                        (u[1] != 0.0).then(|| u[0] / u[1])
                    })
                    .collect();
                alphas.sort_by(f64::total_cmp);
                let lo = alphas[alphas.len() / 2000];
                let hi = alphas[alphas.len() - 1 - alphas.len() / 2000];
                let pad = 0.5 * (hi - lo);
                let alpha = clip(lo - pad, hi + pad, &dflt[0])?;
                Ok(GridSpec::Gle { alpha, log_tau })
            }
        }
    }

    /// Draws `theta` from the prior restricted to the grid box.
    pub fn sample<R: Rng + ?Sized>(&self, box_: &GridSpec, rng: &mut R) -> Result<Theta> {
        let k = self.k();
        let v = self.cov_mat().view((0, 0), (k, k)).into_owned();
        let chol = linalg::cholesky_lower(&v, "kernel covariance")?;
        let m = DVector::from_column_slice(&self.mean[..k]);
        for _ in 0..10_000 {
            let u = stats::sample_mvn(&m, &chol, rng);
            let mut full = vec![0.0; dim(self.family)];
            full[..k].copy_from_slice(u.as_slice());
            let Some(coords) = vartheta_coords(self.family, &full) else { continue };
            if !box_.contains(&coords) || self.family.vartheta(&coords).is_err() {
                continue;
            }
            let ls = conjugate::sample_mniw(&self.mniw_at(&coords)?, rng)?;
            return Ok(Theta { vartheta: self.family.vartheta(&coords)?, ls });
        }
        Err(Error::numerical("test prior has negligible mass inside the grid box"))
    }
}

/// Location-scale moments for [`TestPrior::synthetic`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScale {
    pub mu_sd: f64,
    pub log_sigma: f64,
    pub log_sigma_sd: f64,
    pub rho: f64,
    pub rho_sd: f64,
}

impl Default for SyntheticScale {
    fn default() -> Self {
        Self { mu_sd: 0.05, log_sigma: 0.3f64.ln(), log_sigma_sd: 0.1, rho: 0.0, rho_sd: 0.1 }
    }
}

/// Moment-matched conjugate prior from draws of the transformed parameter.
pub fn conjugate_approx(samples: &[DVector<f64>], family: ModelFamily) -> Result<TestPrior> {
    if samples.len() < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {}", samples.len())));
    }
    let (mean, cov) = linalg::mean_and_cov(samples);
    TestPrior::from_moments(family, mean, cov)
}

/// Settings for the full hierarchical fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierConfig {
    /// Posterior draws per dataset.
    pub draws_per_dataset: usize,
    pub gibbs: GibbsConfig,
}

impl Default for HierConfig {
    fn default() -> Self {
        Self { draws_per_dataset: 10_000, gibbs: GibbsConfig::default() }
    }
}

/// Runs all steps and returns the test prior with the hyperparameter chain.
pub fn fit_test_prior(
    data: &[IncrementMatrix],
    grid: &ModelGrid,
    config: &HierConfig,
    seed: Seed,
) -> Result<(TestPrior, HierDraws, Vec<NormalApprox>)> {
    let prior = PriorSpec::default();
    let approxes = independent_posteriors(data, grid, &prior, config.draws_per_dataset, seed.named("independent"))?;
    let h = gibbs_fit(grid.family, &approxes, &config.gibbs, seed.named("gibbs"))?;
    let draws = test_prior_draws(&h, seed.named("augment"))?;
    let tp = conjugate_approx(&draws, grid.family)?;
    Ok((tp, h, approxes))
}
