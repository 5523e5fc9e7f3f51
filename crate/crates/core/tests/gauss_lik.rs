use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;
use subdiff::acf::{fbm_acf, gle_acf, gle_decompose, AcfVector, FbmParams, GleParams};
use subdiff::gausslik::{self, dl_factor, loglik, profile_mle, residuals, simulate, simulate_increments, LocationScale};
use subdiff::stats::{ks_critical_05, ks_distance_normal};
use subdiff::trajectory::{pathwise_msd, IncrementMatrix};
use subdiff::Seed;

/// Matrix-normal log-density evaluated with dense Cholesky factorizations.
fn dense_loglik(x: &IncrementMatrix, ls: &LocationScale, acf: &AcfVector) -> f64 {
    let n = x.len();
    let v = acf.toeplitz(n);
    let cv = v.clone().cholesky().unwrap();
    let sigma = DMatrix::from_row_slice(2, 2, &[ls.sigma[0][0], ls.sigma[0][1], ls.sigma[1][0], ls.sigma[1][1]]);
    let cs = sigma.clone().cholesky().unwrap();
    let r = DMatrix::from_fn(n, 2, |i, j| x.rows[i][j] - x.dt * ls.mu[j]);
    let a = cv.solve(&r);
    let b = cs.solve(&r.transpose());
    let tr = (0..n).map(|i| (0..2).map(|j| a[(i, j)] * b[(j, i)]).sum::<f64>()).sum::<f64>();
    let ldv = 2.0 * cv.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let lds = 2.0 * cs.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (tr + n as f64 * lds + 2.0 * ldv) - n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn random_acf(kind: u8, p: f64, dt: f64, n: usize) -> AcfVector {
    match kind {
        0 => fbm_acf(&FbmParams::new(p).unwrap(), dt, n).unwrap(),
        _ => gle_acf(&gle_decompose(&GleParams::from_alpha(2.0 * p, 1e-3 + p * 0.1, 1 + kind as usize * 7).unwrap()).unwrap(), dt, n),
    }
}

#[test]
fn ar1_innovations_match_dense_factorization() {
    let phi: f64 = -0.45;
    let g: Vec<f64> = (0..30).map(|k| phi.powi(k) / (1.0 - phi * phi)).collect();
    let acf = AcfVector { dt: 1.0, gamma: g };
    let f = dl_factor(&acf, 30).unwrap();
    let dense = acf.toeplitz(30).cholesky().unwrap();
    for i in 0..30 {
        assert!((f.v[i] - dense.l()[(i, i)].powi(2)).abs() < 1e-12);
        if i > 0 {
            assert!((f.v[i] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fbm_log_det_matches_dense() {
    let acf = fbm_acf(&FbmParams::new(0.83).unwrap(), 0.05, 128).unwrap();
    let f = dl_factor(&acf, 128).unwrap();
    let dense = acf.toeplitz(128).cholesky().unwrap();
    let ld = 2.0 * dense.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    assert!((f.log_det() - ld).abs() < 1e-8);
}

#[test]
fn simulated_lag_covariances_match_acf() {
    let n = 1 << 14;
    let acf = fbm_acf(&FbmParams::new(0.3).unwrap(), 1.0, n).unwrap();
    let x = simulate_increments(&LocationScale::standard(), &acf, n, &mut Seed(21).rng()).unwrap();
    for c in 0..2 {
        let col = x.column(c);
        for k in 0..=5 {
            let est = col.iter().zip(&col[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64;
            // standard error of a lag product mean for short-memory series
            let se = (2.0 / n as f64).sqrt() * acf.gamma[0];
            assert!((est - acf.gamma[k]).abs() < 4.0 * se, "col {c} lag {k}: {est} vs {}", acf.gamma[k]);
        }
    }
}

#[test]
fn brownian_increments_are_uncorrelated() {
    let n = 1800;
    let acf = fbm_acf(&FbmParams::new(0.5).unwrap(), 1.0 / 60.0, n).unwrap();
    let x = simulate_increments(&LocationScale::standard(), &acf, n, &mut Seed(4).rng()).unwrap();
    let col = x.column(0);
    let m = col.iter().sum::<f64>() / n as f64;
    let c0: f64 = col.iter().map(|a| (a - m).powi(2)).sum();
    let c1: f64 = col.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    assert!((c1 / c0).abs() < 3.0 / (n as f64).sqrt());
}

#[test]
fn simulation_is_deterministic_under_seed() {
    let acf = fbm_acf(&FbmParams::new(0.4).unwrap(), 0.1, 100).unwrap();
    let ls = LocationScale::from_sds([0.1, 0.2], 0.5, 0.7, 0.3).unwrap();
    let a = simulate(&ls, &acf, 100, Seed(9)).unwrap();
    let b = simulate(&ls, &acf, 100, Seed(9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, simulate(&ls, &acf, 100, Seed(10)).unwrap());
}

type MsdFn = Box<dyn Fn(f64) -> f64>;

#[test]
fn ensemble_msd_matches_model() {
    let (n, paths, dt) = (300usize, 200usize, 1.0 / 60.0);
    let fbm = FbmParams::new(0.35).unwrap();
    let gle = gle_decompose(&GleParams::from_alpha(0.6, 5e-3, 20).unwrap()).unwrap();
    let cases: Vec<(AcfVector, MsdFn)> = vec![
        (fbm_acf(&fbm, dt, n).unwrap(), Box::new(move |t| subdiff::acf::fbm_msd(&fbm, t))),
        (gle_acf(&gle, dt, n), Box::new(move |t| subdiff::acf::gle_msd(&gle, t))),
    ];
    for (ci, (acf, msd)) in cases.iter().enumerate() {
        let curves: Vec<Vec<f64>> = (0..paths)
            .map(|p| {
                let t = simulate(&LocationScale::standard(), acf, n, Seed(100 + ci as u64).child(p as u64)).unwrap();
                pathwise_msd(&t, n / 10, false).unwrap().values
            })
            .collect();
        for k in 0..n / 10 {
            let vals: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            let m = vals.iter().sum::<f64>() / paths as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (paths - 1) as f64).sqrt();
            let se = sd / (paths as f64).sqrt();
            let exact = msd((k + 1) as f64 * dt);
            assert!((m - exact).abs() < 3.0 * se, "case {ci} lag {}: {m} vs {exact} (se {se})", k + 1);
        }
    }
}

#[test]
fn residuals_at_truth_are_standard_normal() {
    let (n, reps) = (300usize, 100usize);
    let acf = fbm_acf(&FbmParams::new(0.7).unwrap(), 1.0 / 60.0, n).unwrap();
    let ls = LocationScale::from_sds([0.5, -0.3], 0.4, 0.2, 0.6).unwrap();
    let crit = ks_critical_05(n);
    let mut below = 0;
    let mut pooled = Vec::new();
    for r in 0..reps {
        let x = simulate_increments(&ls, &acf, n, &mut Seed(77).child(r as u64).rng()).unwrap();
        let z = residuals(&x, &ls, &acf).unwrap();
        for c in 0..2 {
            if ks_distance_normal(&z.column(c)) < crit {
                below += 1;
            }
        }
        if r == 0 {
            pooled = z.z.iter().flat_map(|row| row.iter().copied()).collect();
        }
    }
    assert!(below as f64 >= 0.93 * (2 * reps) as f64, "{below} of {}", 2 * reps);
    let m = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let v = pooled.iter().map(|z| (z - m).powi(2)).sum::<f64>() / pooled.len() as f64;
    let tol = 4.0 / ((2 * n) as f64).sqrt();
    assert!(m.abs() < tol && (v - 1.0).abs() < tol, "mean {m} var {v}");
}

/// Cyclic golden-section ascent over `(mu1, mu2, log s1, log s2, atanh rho)`.
fn brute_force_max(x: &IncrementMatrix, acf: &AcfVector, start: [f64; 5]) -> f64 {
    let f = |p: &[f64; 5]| {
        let ls = LocationScale::from_sds([p[0], p[1]], p[2].exp(), p[3].exp(), p[4].tanh()).unwrap();
        loglik(x, &ls, acf).unwrap()
    };
    let mut p = start;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        for i in 0..5 {
            let (mut a, mut b) = (p[i] - 1.0, p[i] + 1.0);
            for _ in 0..80 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                let (mut pc, mut pd) = (p, p);
                pc[i] = c;
                pd[i] = d;
                if f(&pc) > f(&pd) {
                    b = d;
                } else {
                    a = c;
                }
            }
            p[i] = 0.5 * (a + b);
        }
    }
    f(&p)
}

#[test]
fn profile_matches_brute_force_maximization() {
    let n = 6;
    let acf = fbm_acf(&FbmParams::new(0.6).unwrap(), 0.5, n).unwrap();
    let ls = LocationScale::from_sds([0.2, -0.1], 0.8, 0.5, 0.3).unwrap();
    let x = simulate_increments(&ls, &acf, n, &mut Seed(5).rng()).unwrap();
    let fit = profile_mle(&x, &acf).unwrap();
    let (s1, s2, r) = fit.ls.sds_and_corr();
    let start = [fit.ls.mu[0] + 0.3, fit.ls.mu[1] - 0.2, s1.ln() + 0.3, s2.ln() - 0.3, r.atanh() * 0.5];
    let brute = brute_force_max(&x, &acf, start);
    assert!((brute - fit.loglik).abs() < 1e-4, "{brute} vs {}", fit.loglik);
}

#[test]
fn zero_mean_white_noise_profile_is_least_squares() {
    let rows = vec![[1.0, 0.5], [-1.0, 0.25], [0.5, -0.5], [-0.5, -0.25]];
    let x = IncrementMatrix::new(1.0, rows.clone()).unwrap();
    let acf = AcfVector { dt: 1.0, gamma: vec![1.0, 0.0, 0.0, 0.0] };
    let fit = profile_mle(&x, &acf).unwrap();
    assert!(fit.ls.mu[0].abs() < 1e-15 && fit.ls.mu[1].abs() < 1e-15);
    let mut s = Matrix2::zeros();
    for r in &rows {
        s += nalgebra::Vector2::new(r[0], r[1]) * nalgebra::RowVector2::new(r[0], r[1]);
    }
    assert!((fit.ls.sigma_matrix() - s / 4.0).norm() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loglik_matches_dense(kind in 0u8..3, p in 0.05f64..0.95, n in 1usize..80, seed in 0u64..1000,
                            mu0 in -2.0f64..2.0, s1 in 0.1f64..3.0, s2 in 0.1f64..3.0, rho in -0.9f64..0.9) {
        let acf = random_acf(kind, p, 0.1, n);
        let ls = LocationScale::from_sds([mu0, -mu0], s1, s2, rho).unwrap();
        let x = simulate_increments(&LocationScale::from_sds([0.3, 0.1], 1.0, 1.5, 0.2).unwrap(), &acf, n, &mut Seed(seed).rng()).unwrap();
        let a = loglik(&x, &ls, &acf).unwrap();
        let b = dense_loglik(&x, &ls, &acf);
        prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn drift_translation_invariance(seed in 0u64..1000, m0 in -5.0f64..5.0, m1 in -5.0f64..5.0) {
        let n = 40;
        let acf = fbm_acf(&FbmParams::new(0.3).unwrap(), 0.2, n).unwrap();
        let ls = LocationScale::from_sds([0.0, 0.0], 1.0, 0.7, -0.4).unwrap();
        let x = simulate_increments(&ls, &acf, n, &mut Seed(seed).rng()).unwrap();
        let shifted = IncrementMatrix::new(x.dt, x.rows.iter().map(|r| [r[0] + x.dt * m0, r[1] + x.dt * m1]).collect()).unwrap();
        let moved = LocationScale { mu: [m0, m1], ..ls.clone() };
        let a = loglik(&x, &ls, &acf).unwrap();
        let b = loglik(&shifted, &moved, &acf).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn profile_dominates_other_parameters(seed in 0u64..1000, d0 in -1.0f64..1.0, ds in 0.5f64..2.0, rho in -0.8f64..0.8) {
        let n = 50;
        let acf = fbm_acf(&FbmParams::new(0.65).unwrap(), 0.1, n).unwrap();
        let x = simulate_increments(&LocationScale::from_sds([1.0, 0.0], 0.6, 0.9, 0.1).unwrap(), &acf, n, &mut Seed(seed).rng()).unwrap();
        let fit = profile_mle(&x, &acf).unwrap();
        let (s1, s2, _) = fit.ls.sds_and_corr();
        let other = LocationScale::from_sds([fit.ls.mu[0] + d0, fit.ls.mu[1]], s1 * ds, s2, rho).unwrap();
        prop_assert!(fit.loglik >= loglik(&x, &other, &acf).unwrap() - 1e-9);
        let at_mle = loglik(&x, &fit.ls, &acf).unwrap();
        prop_assert!((at_mle - fit.loglik).abs() < 1e-8 * at_mle.abs().max(1.0));
        let sh = fit.ls.sigma_matrix();
        prop_assert!((sh - sh.transpose()).norm() == 0.0 && sh.determinant() > 0.0);
    }

    #[test]
    fn residuals_scale_equivariant(seed in 0u64..1000, c in 0.01f64..100.0) {
        let n = 30;
        let acf = fbm_acf(&FbmParams::new(0.45).unwrap(), 0.1, n).unwrap();
        let ls = LocationScale::from_sds([0.0, 0.0], 0.5, 1.5, 0.35).unwrap();
        let x = simulate_increments(&ls, &acf, n, &mut Seed(seed).rng()).unwrap();
        let xc = IncrementMatrix::new(x.dt, x.rows.iter().map(|r| [c * r[0], c * r[1]]).collect()).unwrap();
        let lc = LocationScale::from_sds([0.0, 0.0], 0.5 * c, 1.5 * c, 0.35).unwrap();
        let a = residuals(&x, &ls, &acf).unwrap();
        let b = residuals(&xc, &lc, &acf).unwrap();
        for (ra, rb) in a.z.iter().zip(&b.z) {
            prop_assert!((ra[0] - rb[0]).abs() < 1e-9 && (ra[1] - rb[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn residuals_reject_non_pd_scale() {
    let x = IncrementMatrix::new(1.0, vec![[0.0, 1.0]; 3]).unwrap();
    let acf = AcfVector { dt: 1.0, gamma: vec![1.0, 0.0, 0.0] };
    let bad = LocationScale { mu: [0.0; 2], sigma: [[1.0, 2.0], [2.0, 1.0]] };
    assert!(gausslik::residuals(&x, &bad, &acf).is_err());
}
