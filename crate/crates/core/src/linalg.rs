//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};

/// Neumaier-compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Eigen-decomposition of a symmetric 2x2 matrix.
///
/// Eigenvalues are returned largest first; column `i` of the returned matrix is
/// the eigenvector of eigenvalue `i`, normalised so that its first nonzero
/// component is positive.
pub fn sym2_eigen(m: &Matrix2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    let v1 = if b == 0.0 {
        if a >= d {
            Vector2::new(1.0, 0.0)
        } else {
            Vector2::new(0.0, 1.0)
        }
    } else {
        // (A - l1 I) v = 0; pick the better conditioned of the two rows.
        let r1 = Vector2::new(b, l1 - a);
        let r2 = Vector2::new(l1 - d, b);
        if r1.norm() >= r2.norm() {
            r1.normalize()
        } else {
            r2.normalize()
        }
    };
    let v2 = Vector2::new(-v1[1], v1[0]);
    let fix = |v: Vector2<f64>| {
        let first = if v[0] != 0.0 { v[0] } else { v[1] };
        if first < 0.0 {
            -v
        } else {
            v
        }
    };
    let (v1, v2) = (fix(v1), fix(v2));
    (Vector2::new(l1, l2), Matrix2::from_columns(&[v1, v2]))
}

/// Lower Cholesky factor of a 2x2 symmetric positive-definite matrix.
pub fn chol2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let a = m[(0, 0)];
    if !(a > 0.0) {
        return Err(Error::not_pd("2x2 matrix has nonpositive leading entry"));
    }
    let l11 = a.sqrt();
    let l21 = m[(1, 0)] / l11;
    let rem = m[(1, 1)] - l21 * l21;
    if !(rem > 0.0) {
        return Err(Error::not_pd("2x2 matrix has nonpositive Schur complement"));
    }
    Ok(Matrix2::new(l11, 0.0, l21, rem.sqrt()))
}

pub fn is_pd2(m: &Matrix2<f64>) -> bool {
    chol2(m).is_ok() && m.iter().all(|x| x.is_finite())
}

pub fn logdet2(m: &Matrix2<f64>) -> Result<f64> {
    let l = chol2(m)?;
    Ok(2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln()))
}

pub fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::not_pd(what.to_string()))
}

pub fn inverse_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let c = nalgebra::Cholesky::new(symmetrize(m)).ok_or_else(|| Error::not_pd(what.to_string()))?;
    Ok(symmetrize(&c.inverse()))
}

/// Sample mean and (n - 1)-normalised covariance of the rows.
pub fn mean_and_cov(rows: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += r;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    if rows.len() > 1 {
        cov /= n - 1.0;
    }
    (mean, cov)
}
