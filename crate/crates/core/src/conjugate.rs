//! Conjugate matrix-normal / inverse-Wishart inference for `(mu, Sigma)` given
//! the kernel parameter, deterministic grid posteriors over the kernel
//! parameter, marginal likelihoods and posterior sampling.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acf::{self, AcfVector, GleDecomposition};
use crate::error::{Error, Result};
pub use crate::gausslik::SufficientStats;
use crate::gausslik::{self, LocationScale, ProfileFit};
use crate::hierarchical::TestPrior;
use crate::linalg;
use crate::model::{ModelFamily, Theta};
use crate::rng::Seed;
use crate::stats::{self, LN_2PI};
use crate::trajectory::IncrementMatrix;

/// Number of response columns.
pub const Q: usize = 2;
const QF: f64 = Q as f64;

/// Mean and standard deviation of `log tau` under the default prior.
pub const LOG_TAU_PRIOR_MEAN: f64 = -6.91;
pub const LOG_TAU_PRIOR_SD: f64 = 2.68;

/// MNIW hyperparameters: `Sigma ~ InvWishart(psi, nu)`,
/// `mu | Sigma ~ Normal(lambda, Sigma / omega)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MniwParams {
    pub lambda: [f64; 2],
    pub omega: f64,
    pub psi: [[f64; 2]; 2],
    pub nu: f64,
}

impl MniwParams {
    pub fn new(lambda: [f64; 2], omega: f64, psi: Matrix2<f64>, nu: f64) -> Self {
        Self { lambda, omega, psi: mat_to_arr(&psi), nu }
    }

    /// The improper location-scale invariant prior `|Sigma|^{-(nu+q+1)/2}`;
    /// `nu = 0` gives the independence-Jeffreys prior.
    pub fn improper(nu: f64) -> Self {
        Self { lambda: [0.0; 2], omega: 0.0, psi: [[0.0; 2]; 2], nu }
    }

    /// Proper but nearly flat prior: `psi = 1e-20 I`, `lambda = 0`,
    /// `omega = 1000`, and `nu` just above `q - 1`.
    pub fn noninformative() -> Self {
        Self::new([0.0; 2], 1000.0, Matrix2::identity() * 1e-20, QF - 1.0 + 1e-6)
    }

    pub fn psi_matrix(&self) -> Matrix2<f64> {
        arr_to_mat(&self.psi)
    }

    pub fn lambda_vector(&self) -> Vector2<f64> {
        Vector2::new(self.lambda[0], self.lambda[1])
    }

    pub fn is_improper_default(&self) -> bool {
        self.omega == 0.0 && self.psi.iter().flatten().all(|&p| p == 0.0)
    }

    pub fn is_proper(&self) -> bool {
        self.omega > 0.0 && self.nu > QF - 1.0 && linalg::is_pd2(&self.psi_matrix())
    }

    /// `E[Sigma] = psi / (nu - q - 1)`, defined for `nu > q + 1`.
    pub fn mean_sigma(&self) -> Option<Matrix2<f64>> {
        (self.nu > QF + 1.0).then(|| self.psi_matrix() / (self.nu - QF - 1.0))
    }
}

fn mat_to_arr(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn arr_to_mat(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

/// Log of the inverse-Wishart normalizer
/// `Xi(psi, nu) = |psi|^{nu/2} / (2^{nu q / 2} Gamma_q(nu / 2))`.
pub fn log_iw_normalizer(psi: &Matrix2<f64>, nu: f64) -> Result<f64> {
    let ld = linalg::logdet2(psi)?;
    Ok(0.5 * nu * ld - 0.5 * nu * QF * std::f64::consts::LN_2 - stats::ln_mvgamma(Q, 0.5 * nu))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MniwUpdate {
    pub posterior: MniwParams,
    /// `log f(Y | vartheta)`; only defined up to a constant when `relative`.
    pub log_evidence: f64,
    pub relative: bool,
}

pub fn mniw_update(x: &IncrementMatrix, acf: &AcfVector, prior: &MniwParams) -> Result<MniwUpdate> {
    mniw_update_stats(&SufficientStats::compute(x, acf)?, prior)
}

/// Conjugate update from sufficient statistics.
pub fn mniw_update_stats(st: &SufficientStats, prior: &MniwParams) -> Result<MniwUpdate> {
    let n = st.n as f64;
    let u = Vector2::new(st.u[0], st.u[1]);
    let s = st.s_matrix();
    if prior.is_improper_default() {
        if !(st.t > 0.0) {
            return Err(Error::numerical("singular design cross-product"));
        }
        let beta = u / st.t;
        let resid = linalg::symmetrize2(&(s - u * u.transpose() / st.t));
        let nu_hat = prior.nu + n - 1.0;
        if !(nu_hat > QF - 1.0) || !linalg::is_pd2(&resid) {
            return Err(Error::data("insufficient data for the improper prior (posterior not proper)"));
        }
        let log_evidence = -0.5 * (n - 1.0) * QF * LN_2PI - 0.5 * QF * st.t.ln() - 0.5 * QF * st.log_det_v
            - log_iw_normalizer(&resid, nu_hat)?;
        return Ok(MniwUpdate {
            posterior: MniwParams::new([beta[0], beta[1]], st.t, resid, nu_hat),
            log_evidence,
            relative: true,
        });
    }
    if !prior.is_proper() {
        return Err(Error::ImproperPrior(
            "MNIW prior must have omega > 0, nu > q - 1 and positive-definite psi".into(),
        ));
    }
    let lam = prior.lambda_vector();
    let omega_hat = prior.omega + st.t;
    let lam_hat = (u + prior.omega * lam) / omega_hat;
    let nu_hat = prior.nu + n;
    // Psi + S + (omega T / omega_hat) (beta_hat - lambda)(beta_hat - lambda)',
    // written without dividing by T.
    let d = u - st.t * lam;
    let resid = s - u * u.transpose() / st.t.max(f64::MIN_POSITIVE);
    let shrink = if st.t > 0.0 { prior.omega / (st.t * omega_hat) } else { 0.0 };
    let psi_hat = linalg::symmetrize2(&(prior.psi_matrix() + resid + shrink * d * d.transpose()));
    let log_evidence = -0.5 * n * QF * LN_2PI + 0.5 * QF * (prior.omega.ln() - omega_hat.ln())
        - 0.5 * QF * st.log_det_v
        + log_iw_normalizer(&prior.psi_matrix(), prior.nu)?
        - log_iw_normalizer(&psi_hat, nu_hat)?;
    Ok(MniwUpdate {
        posterior: MniwParams::new([lam_hat[0], lam_hat[1]], omega_hat, psi_hat, nu_hat),
        log_evidence,
        relative: false,
    })
}

/// Evenly spaced nodes including both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || (n > 1 && !(hi > lo)) || n == 0 {
            return Err(Error::invalid(format!("bad grid axis ({lo}, {hi}, {n})")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        let h = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i + 1 == self.n { self.hi } else { self.lo + h * i as f64 }).collect()
    }

    /// Trapezoid weights; a single node gets unit weight.
    pub fn trapezoid(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![1.0];
        }
        let h = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i == 0 || i + 1 == self.n { 0.5 * h } else { h }).collect()
    }
}

/// Grid over the kernel parameter, in the coordinates `H` (fBM) or
/// `(alpha, log tau)` (GLE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    Fbm { hurst: Axis },
    Gle { alpha: Axis, log_tau: Axis },
}

impl GridSpec {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Fbm => GridSpec::Fbm { hurst: Axis { lo: 0.005, hi: 0.995, n: 400 } },
            ModelFamily::Gle { .. } => GridSpec::Gle {
                alpha: Axis { lo: 0.02, hi: 1.98, n: 80 },
                log_tau: Axis { lo: -16.0, hi: 1.0, n: 80 },
            },
        }
    }

    pub fn axes(&self) -> Vec<Axis> {
        match *self {
            GridSpec::Fbm { hurst } => vec![hurst],
            GridSpec::Gle { alpha, log_tau } => vec![alpha, log_tau],
        }
    }

    pub fn matches(&self, family: ModelFamily) -> bool {
        matches!(
            (self, family),
            (GridSpec::Fbm { .. }, ModelFamily::Fbm) | (GridSpec::Gle { .. }, ModelFamily::Gle { .. })
        )
    }

    /// Grid nodes, the last coordinate varying fastest, with log trapezoid weights.
    pub fn nodes(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let axes = self.axes();
        let pts: Vec<Vec<f64>> = axes.iter().map(Axis::points).collect();
        let wts: Vec<Vec<f64>> = axes.iter().map(Axis::trapezoid).collect();
        let mut nodes = vec![vec![]];
        let mut logq = vec![0.0];
        for (p, w) in pts.iter().zip(&wts) {
            let mut nn = Vec::with_capacity(nodes.len() * p.len());
            let mut nq = Vec::with_capacity(nodes.len() * p.len());
            for (node, lq) in nodes.iter().zip(&logq) {
                for (x, wx) in p.iter().zip(w) {
                    let mut c = node.clone();
                    c.push(*x);
                    nn.push(c);
                    nq.push(lq + wx.ln());
                }
            }
            nodes = nn;
            logq = nq;
        }
        (nodes, logq)
    }

    /// Whether `coords` lie inside the grid box.
    pub fn contains(&self, coords: &[f64]) -> bool {
        self.axes().iter().zip(coords).all(|(a, &c)| c >= a.lo && c <= a.hi)
    }
}

/// Prior on `(vartheta, mu, Sigma)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PriorSpec {
    /// The improper location-scale prior with the default kernel prior.
    Default { nu: f64 },
    /// A fixed MNIW prior at every kernel value, with the default kernel prior.
    Conjugate { mniw: MniwParams },
    /// Data-driven prior from the hierarchical fit.
    Test(Box<TestPrior>),
    /// A previously computed posterior on the same grid, reused as the prior.
    Posterior(Box<PosteriorGrid>),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Default { nu: 0.0 }
    }
}

/// Log density of the default kernel prior in grid coordinates: `alpha`
/// uniform on `(0, 2)` and, for the GLE, `log tau ~ Normal(-6.91, 2.68^2)`.
pub fn default_vartheta_log_density(family: ModelFamily, coords: &[f64]) -> f64 {
    match family {
        ModelFamily::Fbm => {
            if coords[0] > 0.0 && coords[0] < 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        ModelFamily::Gle { .. } => {
            if coords[0] > 0.0 && coords[0] < 2.0 {
                -std::f64::consts::LN_2 + stats::normal_ln_pdf(coords[1], LOG_TAU_PRIOR_MEAN, LOG_TAU_PRIOR_SD)
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

impl PriorSpec {
    pub fn is_proper(&self) -> bool {
        match self {
            PriorSpec::Default { .. } => false,
            PriorSpec::Conjugate { mniw } => mniw.is_proper(),
            PriorSpec::Test(_) | PriorSpec::Posterior(_) => true,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PriorSpec::Default { .. } => "default",
            PriorSpec::Conjugate { .. } => "conjugate",
            PriorSpec::Test(_) => "test",
            PriorSpec::Posterior(_) => "posterior",
        }
    }

    /// Kernel log prior density and conditional MNIW prior at grid node `index`.
    fn at_node(&self, family: ModelFamily, coords: &[f64], index: usize) -> Result<(f64, MniwParams)> {
        match self {
            PriorSpec::Default { nu } => Ok((default_vartheta_log_density(family, coords), MniwParams::improper(*nu))),
            PriorSpec::Conjugate { mniw } => Ok((default_vartheta_log_density(family, coords), *mniw)),
            PriorSpec::Test(tp) => Ok((tp.log_vartheta_density(coords), tp.mniw_at(coords)?)),
            PriorSpec::Posterior(g) => {
                let node = g.nodes.get(index).ok_or_else(|| Error::invalid("posterior prior is on a different grid"))?;
                if node.iter().zip(coords).any(|(a, b)| a != b) {
                    return Err(Error::invalid("posterior prior is on a different grid"));
                }
                Ok((g.logw[index] - g.log_norm(), g.cond[index]))
            }
        }
    }
}

/// A model family on a fixed kernel grid, with GLE decompositions cached per
/// `alpha` value (decompositions for other `tau` follow by rescaling).
#[derive(Clone, Debug)]
pub struct ModelGrid {
    pub family: ModelFamily,
    pub spec: GridSpec,
    pub nodes: Vec<Vec<f64>>,
    pub log_quad: Vec<f64>,
    unit: Vec<GleDecomposition>,
}

/// Per-node sufficient statistics of one dataset on a [`ModelGrid`].
#[derive(Clone, Debug)]
pub struct GridStats {
    pub n: usize,
    pub dt: f64,
    pub stats: Vec<SufficientStats>,
}

impl ModelGrid {
    pub fn new(family: ModelFamily, spec: GridSpec) -> Result<Self> {
        if !spec.matches(family) {
            return Err(Error::invalid(format!("grid does not match model {}", family.label())));
        }
        let (nodes, log_quad) = spec.nodes();
        let unit = match (family, spec) {
            (ModelFamily::Gle { modes }, GridSpec::Gle { alpha, .. }) => alpha
                .points()
                .par_iter()
                .map(|&a| {
                    if !(a > 0.0 && a < 2.0) {
                        return Err(Error::invalid(format!("GLE grid alpha {a} outside (0, 2)")));
                    }
                    acf::gle_decompose_unit(1.0 / a, modes)
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(Self { family, spec, nodes, log_quad, unit })
    }

    pub fn with_default_grid(family: ModelFamily) -> Result<Self> {
        Self::new(family, GridSpec::default_for(family))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn acf_at(&self, index: usize, dt: f64, nlags: usize) -> Result<AcfVector> {
        let c = &self.nodes[index];
        match (self.family, self.spec) {
            (ModelFamily::Fbm, _) => acf::fbm_acf(&acf::FbmParams::new(c[0])?, dt, nlags),
            (ModelFamily::Gle { .. }, GridSpec::Gle { log_tau, .. }) => {
                let ia = index / log_tau.n;
                Ok(acf::gle_acf(&self.unit[ia].rescale(c[1].exp()), dt, nlags))
            }
            _ => unreachable!("grid checked at construction"),
        }
    }

    /// Sufficient statistics at every node (in parallel).
    pub fn stats(&self, x: &IncrementMatrix) -> Result<GridStats> {
        let n = x.len();
        let stats = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let acf = self.acf_at(i, x.dt, n)?;
                SufficientStats::compute(x, &acf).map_err(|e| match e {
                    Error::NotPositiveDefinite(m) => {
                        Error::NotPositiveDefinite(format!("{m} at grid node {:?}", self.nodes[i]))
                    }
                    e => e,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridStats { n, dt: x.dt, stats })
    }

    pub fn posterior(&self, stats: &GridStats, prior: &PriorSpec) -> Result<PosteriorGrid> {
        let per_node = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let (lp, mniw) = prior.at_node(self.family, &self.nodes[i], i)?;
                let up = mniw_update_stats(&stats.stats[i], &mniw)?;
                Ok((lp + up.log_evidence, up.posterior, up.relative))
            })
            .collect::<Result<Vec<_>>>()?;
        let logw: Vec<f64> = per_node.iter().map(|p| p.0).collect();
        if !logw.iter().any(|w| w.is_finite()) {
            return Err(Error::numerical("posterior weight underflows at every grid node"));
        }
        Ok(PosteriorGrid {
            family: self.family,
            grid: self.spec,
            n: stats.n,
            dt: stats.dt,
            prior: prior.label().into(),
            proper: prior.is_proper() && !per_node.iter().any(|p| p.2),
            nodes: self.nodes.clone(),
            log_quad: self.log_quad.clone(),
            logw,
            cond: per_node.into_iter().map(|p| p.1).collect(),
        })
    }

    /// Profile maximum likelihood over the grid nodes.
    pub fn profile_argmax(&self, stats: &GridStats) -> Result<(usize, ProfileFit)> {
        let mut best: Option<(usize, ProfileFit)> = None;
        for (i, st) in stats.stats.iter().enumerate() {
            let fit = gausslik::profile_from_stats(st)?;
            if best.as_ref().is_none_or(|b| fit.loglik > b.1.loglik) {
                best = Some((i, fit));
            }
        }
        best.ok_or_else(|| Error::invalid("empty grid"))
    }
}

/// Grid posterior over the kernel parameter with MNIW conditionals per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub family: ModelFamily,
    pub grid: GridSpec,
    pub n: usize,
    pub dt: f64,
    pub prior: String,
    /// Whether the prior was proper, so that the marginal likelihood is absolute.
    pub proper: bool,
    pub nodes: Vec<Vec<f64>>,
    pub log_quad: Vec<f64>,
    /// `log pi(vartheta) + log f(Y | vartheta)` per node.
    pub logw: Vec<f64>,
    pub cond: Vec<MniwParams>,
}

/// Posterior mean and central 95% interval of one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PosteriorGrid {
    /// `log sum_i quad_i exp(logw_i)`.
    fn log_norm(&self) -> f64 {
        stats::log_sum_exp(self.logw.iter().zip(&self.log_quad).map(|(w, q)| w + q))
    }

    /// Normalized probability mass at each node.
    pub fn node_probs(&self) -> Vec<f64> {
        let z = self.log_norm();
        self.logw.iter().zip(&self.log_quad).map(|(w, q)| (w + q - z).exp()).collect()
    }

    /// Marginal mass of coordinate `axis` on its axis points.
    pub fn marginal(&self, axis: usize) -> (Vec<f64>, Vec<f64>) {
        let ax = self.grid.axes()[axis];
        let pts = ax.points();
        let mut mass = vec![0.0; pts.len()];
        let stride: usize = self.grid.axes()[axis + 1..].iter().map(|a| a.n).product();
        for (i, p) in self.node_probs().into_iter().enumerate() {
            mass[(i / stride) % ax.n] += p;
        }
        (pts, mass)
    }

    pub fn summary(&self) -> Vec<CoordSummary> {
        let names: &[&str] = match self.family {
            ModelFamily::Fbm => &["H"],
            ModelFamily::Gle { .. } => &["alpha", "log_tau"],
        };
        let mut out: Vec<CoordSummary> = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let (pts, mass) = self.marginal(k);
                CoordSummary {
                    name: name.to_string(),
                    mean: pts.iter().zip(&mass).map(|(x, p)| x * p).sum(),
                    lower: stats::weighted_quantile(&pts, &mass, 0.025),
                    upper: stats::weighted_quantile(&pts, &mass, 0.975),
                }
            })
            .collect();
        match self.family {
            ModelFamily::Fbm => {
                let h = out[0].clone();
                out.push(CoordSummary { name: "alpha".into(), mean: 2.0 * h.mean, lower: 2.0 * h.lower, upper: 2.0 * h.upper });
            }
            ModelFamily::Gle { .. } => {
                let lt = out[1].clone();
                out.push(CoordSummary {
                    name: "tau".into(),
                    mean: {
                        let (pts, mass) = self.marginal(1);
                        pts.iter().zip(&mass).map(|(x, p)| x.exp() * p).sum()
                    },
                    lower: lt.lower.exp(),
                    upper: lt.upper.exp(),
                });
            }
        }
        out
    }
}

/// Builds the grid posterior of `x` under `prior`.
pub fn grid_posterior(x: &IncrementMatrix, grid: &ModelGrid, prior: &PriorSpec) -> Result<PosteriorGrid> {
    grid.posterior(&grid.stats(x)?, prior)
}

/// Log marginal likelihood `log f(Y)` by trapezoid quadrature over the grid.
pub fn log_marginal(g: &PosteriorGrid) -> Result<f64> {
    if !g.proper {
        return Err(Error::ImproperPrior(format!(
            "marginal likelihood is undefined under the '{}' prior",
            g.prior
        )));
    }
    Ok(g.log_norm())
}

/// Draws `(mu, Sigma)` from an MNIW distribution.
pub fn sample_mniw<R: rand::Rng + ?Sized>(p: &MniwParams, rng: &mut R) -> Result<LocationScale> {
    let psi = DMatrix::from_iterator(2, 2, p.psi_matrix().iter().copied());
    let sigma = stats::sample_inverse_wishart(&psi, p.nu, rng)?;
    let chol = linalg::cholesky_lower(&(&sigma / p.omega), "conditional covariance of mu")?;
    let mu = stats::sample_mvn(&DVector::from_column_slice(&p.lambda), &chol, rng);
    LocationScale::new([mu[0], mu[1]], Matrix2::new(sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 0)], sigma[(1, 1)]))
}

/// `m` posterior draws: a node by its mass, then `Sigma` and `mu` from the
/// node's MNIW conditional.
pub fn sample_posterior(g: &PosteriorGrid, m: usize, seed: Seed) -> Result<Vec<Theta>> {
    let mut rng = seed.rng();
    sample_posterior_rng(g, m, &mut rng)
}

pub fn sample_posterior_rng<R: rand::Rng + ?Sized>(g: &PosteriorGrid, m: usize, rng: &mut R) -> Result<Vec<Theta>> {
    sample_posterior_nodes(g, m, rng)?
        .into_iter()
        .map(|(i, ls)| Ok(Theta { vartheta: g.family.vartheta(&g.nodes[i])?, ls }))
        .collect()
}

/// Posterior draws as `(node index, (mu, Sigma))` pairs.
pub fn sample_posterior_nodes<R: rand::Rng + ?Sized>(
    g: &PosteriorGrid,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, LocationScale)>> {
    let probs = g.node_probs();
    let pick = WeightedIndex::new(&probs).map_err(|e| Error::numerical(format!("posterior weights: {e}")))?;
    (0..m)
        .map(|_| {
            let i = pick.sample(rng);
            Ok((i, sample_mniw(&g.cond[i], rng)?))
        })
        .collect()
}
