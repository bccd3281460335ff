//! Cross-checks against independent implementations: nalgebra for the
//! linear algebra, statrs for the normal distribution, plain loops for the
//! convolution counts and Monte Carlo for expected improvement.

use edgetune_core::cbo::{expected_improvement, prob_feasible, rs_expected_trials};
use edgetune_core::gp::{self, GpHyperparams, GpModel, KernelKind};
use edgetune_core::linalg::Matrix;
use edgetune_core::perf::{conv_arithmetic_intensity, kkt_holds, nnls, ConvLayerShape};
use edgetune_core::rng::stream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn se(a: &[f64], b: &[f64], ls: &[f64], sf2: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    sf2 * (-0.5 * r2).exp()
}

fn gram(xs: &[Vec<f64>], h: &GpHyperparams) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| se(&xs[i], &xs[j], &h.lengthscales, h.signal_variance) + if i == j { h.noise_variance } else { 0.0 })
}

#[test]
fn gp_posterior_matches_hand_solve() {
    let xs = vec![vec![0.0], vec![0.4], vec![1.0]];
    let ys = [1.0, -0.5, 2.0];
    let h = GpHyperparams { lengthscales: vec![0.35], signal_variance: 1.7, noise_variance: 0.05 };
    let m = GpModel::with_hyperparams(&xs, &ys, h.clone(), KernelKind::SquaredExponential, false).unwrap();
    let k = gram(&xs, &h);
    let kinv = k.clone().try_inverse().unwrap();
    let y = DVector::from_row_slice(&ys);
    for q in [-0.3, 0.1, 0.4, 0.77, 1.5] {
        let ks = DVector::from_iterator(3, xs.iter().map(|x| se(x, &[q], &h.lengthscales, h.signal_variance)));
        let mean = (ks.transpose() * &kinv * &y)[0];
        let var = h.signal_variance - (ks.transpose() * &kinv * &ks)[0];
        let (m_mean, m_sd) = m.posterior(&[q]);
        assert!((m_mean - mean).abs() < 1e-10, "{q}: {m_mean} vs {mean}");
        assert!((m_sd - var.max(0.0).sqrt()).abs() < 1e-10);
    }
}

#[test]
fn lml_matches_determinant_form() {
    let mut rng = stream(3, "lml");
    for n in 2..=8 {
        let d = 1 + n % 3;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let h = GpHyperparams {
            lengthscales: (0..d).map(|_| 0.2 + rng.random::<f64>()).collect(),
            signal_variance: 0.5 + rng.random::<f64>(),
            noise_variance: 0.01 + 0.1 * rng.random::<f64>(),
        };
        let k = gram(&xs, &h);
        let y = DVector::from_row_slice(&ys);
        let quad = (y.transpose() * k.clone().try_inverse().unwrap() * &y)[0];
        let oracle = -0.5 * quad - 0.5 * k.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let got = gp::log_marginal_likelihood(KernelKind::SquaredExponential, &xs, &ys, &h).unwrap();
        assert!((got - oracle).abs() < 1e-8, "n={n}: {got} vs {oracle}");
    }
}

#[test]
fn lengthscale_recovered_from_gp_sample() {
    let mut rng = stream(11, "gp-sample");
    let n = 40;
    let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5 * rng.random::<f64>()) / n as f64]).collect();
    let truth = GpHyperparams { lengthscales: vec![0.3], signal_variance: 1.0, noise_variance: 1e-4 };
    let chol = gram(&xs, &truth).cholesky().unwrap();
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    let f = chol.l() * z;
    let ys: Vec<f64> = f.iter().copied().collect();
    let m = gp::fit(&xs, &ys, 8, &mut stream(11, "fit")).unwrap();
    // fit rescales x by the data span, so map back before comparing
    let span = xs[n - 1][0] - xs[0][0];
    let l = m.hyperparams().lengthscales[0] * span;
    assert!(l > 0.15 && l < 0.6, "recovered lengthscale {l}");
}

#[test]
fn expected_improvement_matches_monte_carlo() {
    let mut rng = stream(5, "ei-mc");
    let draws = 1_000_000;
    for _ in 0..20 {
        let mean = rng.random::<f64>() * 4.0 - 2.0;
        let sd = 0.05 + rng.random::<f64>() * 2.0;
        let best = rng.random::<f64>() * 4.0 - 2.0;
        let xi = rng.random::<f64>() * 0.3;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let e: f64 = StandardNormal.sample(&mut rng);
            let imp = (best - xi - (mean + sd * e)).max(0.0);
            s += imp;
            s2 += imp * imp;
        }
        let mc = s / draws as f64;
        let ei = expected_improvement(mean, sd, best, xi);
        // the empirical error is 0 when no draw improves; fall back on the
        // closed-form second moment E[I²] = (z² + σ²)Φ(u) + zσφ(u)
        let z = best - xi - mean;
        let u = z / sd;
        let n01 = Normal::new(0.0, 1.0).unwrap();
        let m2 = (z * z + sd * sd) * n01.cdf(u) + z * sd * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let se_emp = ((s2 / draws as f64 - mc * mc) / draws as f64).sqrt();
        let se = se_emp.max(((m2 - ei * ei).max(0.0) / draws as f64).sqrt());
        assert!((ei - mc).abs() <= 3.0 * se + 1e-12, "ei {ei} mc {mc} se {se}");
    }
}

#[test]
fn prob_feasible_matches_statrs() {
    let mut rng = stream(6, "pf");
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..200 {
        let mean = rng.random::<f64>() * 100.0;
        let sd = 0.1 + rng.random::<f64>() * 20.0;
        let slo = rng.random::<f64>() * 100.0;
        let oracle = std_normal.cdf((slo - mean) / sd);
        assert!((prob_feasible(mean, sd, slo) - oracle).abs() < 1e-10);
    }
    assert!((prob_feasible(0.5, 0.1, 0.7) - std_normal.cdf(2.0)).abs() < 1e-10);
}

#[test]
fn acquisition_hand_set_case() {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let ei = expected_improvement(10.0, 2.0, 9.0, 0.1);
    let u: f64 = (9.0 - 10.0 - 0.1) / 2.0;
    let pdf = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let ei_oracle = (9.0 - 10.0 - 0.1) * std_normal.cdf(u) + 2.0 * pdf;
    assert!((ei - ei_oracle).abs() < 1e-12);
    let pf = prob_feasible(0.5, 0.1, 0.7);
    assert!((ei * pf - ei_oracle * std_normal.cdf(2.0)).abs() < 1e-12);
}

#[test]
fn geometric_trials() {
    let (m, s) = rs_expected_trials(10, 200).unwrap();
    assert_eq!(m, 20.0);
    assert!((s - 19.49).abs() < 0.01);
    assert_eq!(rs_expected_trials(7, 7).unwrap(), (1.0, 0.0));
    let (m, s) = rs_expected_trials(1, 4).unwrap();
    assert_eq!(m, 4.0);
    assert!((s - 12f64.sqrt()).abs() < 1e-12);
}

/// Counts multiply-accumulates and touched elements with explicit loops.
fn brute_force_ai(s: &ConvLayerShape) -> f64 {
    let mut macs: u64 = 0;
    for _n in 0..s.n {
        for _k in 0..s.k {
            for _p in 0..s.p {
                for _q in 0..s.q {
                    for _c in 0..s.c {
                        for _r in 0..s.r {
                            for _s in 0..s.s {
                                macs += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    let count = |dims: &[u64]| dims.iter().product::<u64>();
    let input = count(&[s.n, s.c, s.h, s.w]);
    let weights = count(&[s.k, s.c, s.r, s.s]);
    let output = count(&[s.n, s.k, s.p, s.q]);
    macs as f64 / (input + weights + output) as f64
}

#[test]
fn conv_intensity_against_brute_force() {
    let ones = ConvLayerShape { n: 1, c: 1, h: 1, w: 1, k: 1, p: 1, q: 1, r: 1, s: 1 };
    assert_eq!(conv_arithmetic_intensity(&ones), 1.0 / 3.0);
    let stem = ConvLayerShape { n: 1, c: 3, h: 224, w: 224, k: 32, p: 112, q: 112, r: 3, s: 3 };
    let oracle = brute_force_ai(&stem);
    assert_eq!(oracle, 10_838_016.0 / 552_800.0);
    assert!((conv_arithmetic_intensity(&stem) - oracle).abs() < 1e-12);
    assert!((oracle - 19.606).abs() < 1e-3);
    let doubled = ConvLayerShape { n: 2, ..stem };
    assert!((conv_arithmetic_intensity(&doubled) - brute_force_ai(&doubled)).abs() < 1e-12);
    assert!(conv_arithmetic_intensity(&doubled) > oracle);
}

fn random_system(rng: &mut impl Rng, m: usize, n: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 + 0.1).collect()).collect();
    Matrix::from_rows(&rows)
}

#[test]
fn nnls_recovers_nonnegative_theta() {
    let mut rng = stream(8, "nnls");
    for trial in 0..20 {
        let a = random_system(&mut rng, 30, 6);
        let theta: Vec<f64> = (0..6).map(|j| if (trial + j) % 4 == 0 { 0.0 } else { rng.random::<f64>() * 5.0 }).collect();
        let y = a.mul_vec(&theta);
        let x = nnls(&a, &y).unwrap();
        for (got, want) in x.iter().zip(&theta) {
            assert!((got - want).abs() < 1e-6, "{x:?} vs {theta:?}");
        }
        assert!(kkt_holds(&a, &y, &x, 1e-9));
    }
}

#[test]
fn nnls_equals_least_squares_when_unconstrained() {
    let mut rng = stream(9, "nnls-ls");
    let mut checked = 0;
    for _ in 0..200 {
        let n = 1 + rng.random_range(0..6);
        let m = n + rng.random_range(0..=(6 - n));
        let a = random_system(&mut rng, m, n);
        let y: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0).collect();
        let am = DMatrix::from_fn(m, n, |i, j| a.get(i, j));
        let ls = am.clone().svd(true, true).solve(&DVector::from_row_slice(&y), 1e-14).unwrap();
        if ls.iter().all(|v| *v > 1e-6) {
            let x = nnls(&a, &y).unwrap();
            for (got, want) in x.iter().zip(ls.iter()) {
                assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "{x:?} vs {ls}");
            }
            checked += 1;
        }
    }
    assert!(checked > 20, "only {checked} systems had an interior solution");
}

#[test]
fn nnls_kkt_on_random_fits() {
    let mut rng = stream(10, "kkt");
    for _ in 0..100 {
        let m = 3 + rng.random_range(0..20);
        let n = 1 + rng.random_range(0..6);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect()).collect();
        let a = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let x = nnls(&a, &y).unwrap();
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!(kkt_holds(&a, &y, &x, 1e-9), "{x:?}");
    }
}
