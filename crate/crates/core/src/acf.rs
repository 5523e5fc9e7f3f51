//! Increment autocovariances and theoretical MSDs for fractional Brownian
//! motion and the zero-mass GLE with a generalized Rouse kernel.
//!
//! The GLE position process is Brownian motion plus `K - 1` independent
//! Ornstein-Uhlenbeck components, with rates given by the stationary points
//! of `q(y) = prod_k (y - alpha_k)`. The thermal prefactor is fixed to one;
//! absolute scale lives in `Sigma` of the location-scale model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;

/// Golden-section iterations; each shrinks the bracket by 0.618.
const GOLDEN_ITERS: usize = 90;
/// Relative inward shrink of each root bracket, to stay clear of the poles.
const BRACKET_SHRINK: f64 = 1e-12;
/// Acceptance bound on `|s(r)| / sum_k |1/(r - alpha_k)|`.
pub const ROOT_RTOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    hurst: f64,
}

impl FbmParams {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::invalid(format!("Hurst exponent must lie in (0, 1), got {hurst}")));
        }
        Ok(Self { hurst })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }
}

/// Rouse-kernel parameters: relaxation times `tau_k = tau (K/k)^gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GleParams {
    gamma: f64,
    tau: f64,
    modes: usize,
}

impl GleParams {
    pub fn new(gamma: f64, tau: f64, modes: usize) -> Result<Self> {
        if !(gamma > 0.5) || !gamma.is_finite() {
            return Err(Error::invalid(format!("GLE exponent gamma must exceed 1/2, got {gamma}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("GLE time scale must be positive, got {tau}")));
        }
        if modes == 0 {
            return Err(Error::invalid("GLE requires at least one mode"));
        }
        Ok(Self { gamma, tau, modes })
    }

    /// From the subdiffusion exponent `alpha = 1/gamma` in `(0, 2)`.
    pub fn from_alpha(alpha: f64, tau: f64, modes: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(format!("GLE alpha must lie in (0, 2), got {alpha}")));
        }
        Self::new(1.0 / alpha, tau, modes)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn modes(&self) -> usize {
        self.modes
    }
}

/// Sum-of-exponentials representation of a GLE kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GleDecomposition {
    /// Kernel rates `alpha_k = 1/tau_k`, strictly increasing.
    pub alpha: Vec<f64>,
    /// OU rates `r_j`, with `alpha_j < r_j < alpha_{j+1}`.
    pub r: Vec<f64>,
    /// Brownian weight `C_0^2 = (sum_k 1/alpha_k)^{-1}`.
    pub c0sq: f64,
    /// OU weights `C_j^2 / (2 r_j)`.
    pub csq: Vec<f64>,
}

impl GleDecomposition {
    /// The decomposition for time scale `tau` given the one for `tau = 1`.
    ///
    /// All rates and `c0sq` scale as `1/tau` while the OU weights are unchanged.
    pub fn rescale(&self, tau: f64) -> GleDecomposition {
        GleDecomposition {
            alpha: self.alpha.iter().map(|a| a / tau).collect(),
            r: self.r.iter().map(|r| r / tau).collect(),
            c0sq: self.c0sq / tau,
            csq: self.csq.clone(),
        }
    }

    /// Relative residual `|s(r_j)| / sum_k |1/(r_j - alpha_k)|` of each root.
    pub fn root_residuals(&self) -> Vec<f64> {
        self.r
            .iter()
            .map(|&y| {
                let (s, abs) = stationarity(&self.alpha, y);
                s.abs() / abs
            })
            .collect()
    }
}

/// First row of the Toeplitz increment covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfVector {
    pub dt: f64,
    pub gamma: Vec<f64>,
}

impl AcfVector {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Dense `n x n` Toeplitz matrix, for testing and small problems.
    pub fn toeplitz(&self, n: usize) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.gamma[i.abs_diff(j)])
    }
}

pub fn fbm_acf(p: &FbmParams, dt: f64, nlags: usize) -> Result<AcfVector> {
    check_lags(dt, nlags)?;
    let two_h = 2.0 * p.hurst;
    let scale = 0.5 * dt.powf(two_h);
    let pw = |k: f64| k.powf(two_h);
    let gamma = (0..nlags)
        .map(|k| {
            let k = k as f64;
            scale * (pw(k + 1.0) + pw((k - 1.0).abs()) - 2.0 * pw(k))
        })
        .collect();
    Ok(AcfVector { dt, gamma })
}

pub fn fbm_msd(p: &FbmParams, t: f64) -> f64 {
    t.powf(2.0 * p.hurst)
}

/// `s(y) = sum_k 1/(y - alpha_k)` and `sum_k |1/(y - alpha_k)|`, compensated.
fn stationarity(alpha: &[f64], y: f64) -> (f64, f64) {
    let mut s = CompensatedSum::default();
    let mut a = CompensatedSum::default();
    for &ak in alpha {
        let t = 1.0 / (y - ak);
        s.add(t);
        a.add(t.abs());
    }
    (s.value(), a.value())
}

/// Zero of the decreasing function `s` on `(lo, hi)` by golden-section
/// minimisation of `|s|`.
fn golden_root(alpha: &[f64], lo: f64, hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let f = |y: f64| stationarity(alpha, y).0.abs();
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if !(b - a > 2.0 * f64::EPSILON * b.abs()) {
            break;
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

fn unit_decomposition(gamma: f64, modes: usize) -> Result<GleDecomposition> {
    let kf = modes as f64;
    let alpha: Vec<f64> = (1..=modes).map(|k| (k as f64 / kf).powf(gamma)).collect();
    if alpha.windows(2).any(|w| !(w[1] > w[0])) || alpha[0] <= 0.0 {
        return Err(Error::numerical(format!("kernel rates not strictly increasing (gamma = {gamma}, K = {modes})")));
    }
    let c0sq = 1.0 / alpha.iter().rev().map(|a| 1.0 / a).collect::<CompensatedSum>().value();
    let mut r = Vec::with_capacity(modes.saturating_sub(1));
    let mut csq = Vec::with_capacity(modes.saturating_sub(1));
    for j in 0..modes.saturating_sub(1) {
        let (lo, hi) = (alpha[j], alpha[j + 1]);
        let eps = BRACKET_SHRINK * (hi - lo);
        let root = golden_root(&alpha, lo + eps, hi - eps);
        let (s, abs) = stationarity(&alpha, root);
        if !(s.abs() <= ROOT_RTOL * abs) || !(root > lo && root < hi) {
            return Err(Error::numerical(format!(
                "root {j} of the kernel polynomial did not converge (residual {:e})",
                s.abs() / abs
            )));
        }
        let denom: CompensatedSum = alpha.iter().map(|a| (a - root).powi(-2)).collect();
        let c_sq = (1.0 / root) / denom.value();
        r.push(root);
        csq.push(c_sq / (2.0 * root));
    }
    Ok(GleDecomposition { alpha, r, c0sq, csq })
}

/// Decomposition at `tau = 1` for exponent `gamma`, to be combined with
/// [`GleDecomposition::rescale`]; useful when sweeping `tau`.
pub fn gle_decompose_unit(gamma: f64, modes: usize) -> Result<GleDecomposition> {
    GleParams::new(gamma, 1.0, modes)?;
    unit_decomposition(gamma, modes)
}

pub fn gle_decompose(p: &GleParams) -> Result<GleDecomposition> {
    Ok(unit_decomposition(p.gamma, p.modes)?.rescale(p.tau))
}

pub fn gle_acf(d: &GleDecomposition, dt: f64, nlags: usize) -> AcfVector {
    let mut gamma = vec![0.0; nlags];
    if nlags == 0 {
        return AcfVector { dt, gamma };
    }
    gamma[0] = d.c0sq * dt;
    for (&r, &w) in d.r.iter().zip(&d.csq) {
        let m = (-r * dt).exp_m1();
        let e = m + 1.0;
        gamma[0] += -2.0 * w * m;
        // lag k >= 1: -w (1 - e)^2 e^(k-1)
        let mut term = -w * m * m;
        for g in gamma.iter_mut().skip(1) {
            if term.abs() < 1e-300 {
                break;
            }
            *g += term;
            term *= e;
        }
    }
    AcfVector { dt, gamma }
}

pub fn gle_msd(d: &GleDecomposition, t: f64) -> f64 {
    let ou: CompensatedSum = d.r.iter().zip(&d.csq).map(|(&r, &w)| -2.0 * w * (-r * t).exp_m1()).collect();
    d.c0sq * t + ou.value()
}

fn check_lags(dt: f64, nlags: usize) -> Result<()> {
    if nlags == 0 {
        return Err(Error::invalid("need at least one lag"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    Ok(())
}
