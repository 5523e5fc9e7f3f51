//! Distribution utilities: special functions, samplers and summaries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::{erf, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::linalg;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log of the multivariate gamma function `Gamma_q(a)`.
pub fn ln_mvgamma(q: usize, a: f64) -> f64 {
    let qf = q as f64;
    let mut s = 0.25 * qf * (qf - 1.0) * std::f64::consts::PI.ln();
    for j in 1..=q {
        s += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    s
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and the
/// standard normal CDF.
pub fn ks_distance_normal(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = std_normal_cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sided 5% critical value of the one-sample KS statistic.
pub fn ks_critical_05(n: usize) -> f64 {
    let nf = n as f64;
    1.358_099 / (nf.sqrt() + 0.12 + 0.11 / nf.sqrt())
}

/// Effective sample size using Geyer's initial positive sequence.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let var = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Quantile of a discrete distribution on sorted support points, interpolating
/// linearly in the cumulative mass.
pub fn weighted_quantile(support: &[f64], weights: &[f64], p: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for (i, (&x, &w)) in support.iter().zip(weights).enumerate() {
        let next = cum + w / total;
        if next >= p {
            if i == 0 || w == 0.0 {
                return x;
            }
            let frac = (p - cum) / (next - cum);
            return support[i - 1] + frac * (x - support[i - 1]);
        }
        cum = next;
    }
    *support.last().unwrap_or(&f64::NAN)
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
pub fn gaussian_kde(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bw = 1.06 * sd * n.powf(-0.2);
    grid.iter()
        .map(|&g| sample.iter().map(|&x| normal_ln_pdf(g, x, bw).exp()).sum::<f64>() / n)
        .collect()
}

/// Draw from `Normal(mean, L L')` given the lower Cholesky factor `L`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol * z
}

/// Draw from `Inverse-Wishart(psi, nu)` (density proportional to
/// `|S|^{-(nu+q+1)/2} exp(-tr(psi S^{-1})/2)`) with the Bartlett construction.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(psi: &DMatrix<f64>, nu: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let q = psi.nrows();
    if !(nu > q as f64 - 1.0) {
        return Err(Error::invalid(format!("inverse-Wishart degrees of freedom {nu} must exceed {}", q - 1)));
    }
    let psi_inv = linalg::inverse_spd(psi, "inverse-Wishart scale")?;
    let l = linalg::cholesky_lower(&psi_inv, "inverse-Wishart scale inverse")?;
    let mut a = DMatrix::zeros(q, q);
    for i in 0..q {
        let chi = ChiSquared::new(nu - i as f64).map_err(|e| Error::numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let m = l * a;
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(q, q))
        .ok_or_else(|| Error::numerical("singular Bartlett factor"))?;
    Ok(linalg::symmetrize(&(m_inv.transpose() * m_inv)))
}
