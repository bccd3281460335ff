//! Gaussian-process regression with maximum-likelihood hyperparameters.
//!
//! Inputs are min-max normalized to the unit box and targets standardized
//! before fitting; [`GpModel::posterior`] undoes both. Hyperparameters are
//! fitted by projected gradient ascent on the log marginal likelihood in
//! log space from several start points.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 10.0);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-8, 1.0);
pub const DEFAULT_RESTARTS: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Anisotropic squared exponential.
    #[default]
    SquaredExponential,
    /// Anisotropic Matérn with ν = 5/2.
    Matern52,
}

impl KernelKind {
    /// Kernel value from the squared scaled distance `r2 = Σ (Δd/ℓd)²`.
    fn value(self, signal_variance: f64, r2: f64) -> f64 {
        match self {
            KernelKind::SquaredExponential => signal_variance * libm::exp(-0.5 * r2),
            KernelKind::Matern52 => {
                let r = libm::sqrt(r2);
                let s5r = libm::sqrt(5.0) * r;
                signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * libm::exp(-s5r)
            }
        }
    }

    /// `∂k/∂log ℓd = factor · (Δd/ℓd)²`; returns the factor.
    fn lengthscale_factor(self, signal_variance: f64, r2: f64) -> f64 {
        match self {
            KernelKind::SquaredExponential => signal_variance * libm::exp(-0.5 * r2),
            KernelKind::Matern52 => {
                let s5r = libm::sqrt(5.0 * r2);
                signal_variance * (5.0 / 3.0) * (1.0 + s5r) * libm::exp(-s5r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lengthscales.len() != dim {
            return Err(Error::InvalidArgument("one lengthscale per input dimension required".into()));
        }
        if self.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("lengthscales must be > 0".into()));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::InvalidArgument("signal_variance must be > 0".into()));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidArgument("noise_variance must be >= 0".into()));
        }
        Ok(())
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyperparams {
            lengthscales: theta[..d].iter().map(|t| libm::exp(*t)).collect(),
            signal_variance: libm::exp(theta[d]),
            noise_variance: libm::exp(theta[d + 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub kernel: KernelKind,
    pub max_iters: usize,
    /// Fit a linear prior mean by ridge regression before the GP.
    pub linear_trend: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { restarts: DEFAULT_RESTARTS, kernel: KernelKind::SquaredExponential, max_iters: 200, linear_trend: false }
    }
}

/// Affine maps between the caller's units and the model's internal units.
#[derive(Debug, Clone, PartialEq)]
struct Scaling {
    x_min: Vec<f64>,
    x_span: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    /// Intercept then slopes in normalized units; empty for a constant mean.
    trend: Vec<f64>,
}

impl Scaling {
    fn identity(dim: usize) -> Self {
        Scaling { x_min: vec![0.0; dim], x_span: vec![1.0; dim], y_mean: 0.0, y_std: 1.0, trend: Vec::new() }
    }

    fn from_data(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let d = inputs[0].len();
        let mut x_min = vec![f64::INFINITY; d];
        let mut x_max = vec![f64::NEG_INFINITY; d];
        for x in inputs {
            for j in 0..d {
                x_min[j] = x_min[j].min(x[j]);
                x_max[j] = x_max[j].max(x[j]);
            }
        }
        let x_span = x_min.iter().zip(&x_max).map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 }).collect();
        let y_mean = crate::stats::mean(targets);
        let sd = crate::stats::std_dev(targets);
        let y_std = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        Scaling { x_min, x_span, y_mean, y_std, trend: Vec::new() }
    }

    fn x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_min).zip(&self.x_span).map(|((v, lo), s)| (v - lo) / s).collect()
    }

    fn trend_at(&self, xn: &[f64]) -> f64 {
        match self.trend.split_first() {
            Some((c, slopes)) => c + linalg::dot(slopes, xn),
            None => 0.0,
        }
    }
}

/// A fitted GP. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    kernel: KernelKind,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hyper: GpHyperparams,
    chol: Matrix,
    alpha: Vec<f64>,
    jitter: f64,
    scaling: Scaling,
}

fn check_data(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.len() != targets.len() {
        return Err(Error::InvalidArgument("inputs and targets differ in length".into()));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("at least one training point required".into()));
    }
    let d = inputs[0].len();
    if d == 0 || inputs.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidArgument("input vectors must share a positive dimension".into()));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite training value".into()));
    }
    Ok(d)
}

fn sq_dist_scaled(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l) * ((x - y) / l)).sum()
}

fn kernel_matrix(kernel: KernelKind, x: &[Vec<f64>], h: &GpHyperparams) -> Matrix {
    let n = x.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.value(h.signal_variance, sq_dist_scaled(&x[i], &x[j], &h.lengthscales));
            k.set(i, j, v);
            k.set(j, i, v);
        }
        let d = k.get(i, i) + h.noise_variance;
        k.set(i, i, d);
    }
    k
}

struct Factored {
    chol: Matrix,
    alpha: Vec<f64>,
    jitter: f64,
    lml: f64,
}

fn factor(kernel: KernelKind, x: &[Vec<f64>], y: &[f64], h: &GpHyperparams) -> Result<Factored> {
    let k = kernel_matrix(kernel, x, h);
    let (chol, jitter) = linalg::cholesky_jittered(&k)?;
    let alpha = linalg::cholesky_solve(&chol, y);
    let n = y.len() as f64;
    let log_det_half: f64 = (0..y.len()).map(|i| libm::log(chol.get(i, i))).sum();
    let lml = -0.5 * linalg::dot(y, &alpha) - log_det_half - 0.5 * n * libm::log(2.0 * PI);
    Ok(Factored { chol, alpha, jitter, lml })
}

/// Log marginal likelihood and its gradient with respect to
/// `(log ℓ1..log ℓd, log σf², log σn²)`.
fn lml_and_grad(kernel: KernelKind, x: &[Vec<f64>], y: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let h = GpHyperparams::from_log(theta);
    let f = factor(kernel, x, y, &h)?;
    let n = x.len();
    let d = h.lengthscales.len();
    let kinv = linalg::cholesky_inverse(&f.chol);
    // W = α αᵀ − K⁻¹; ∂LML/∂θ = ½ tr(W ∂K/∂θ)
    let w = |i: usize, j: usize| f.alpha[i] * f.alpha[j] - kinv.get(i, j);
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w(i, j);
            let r2 = sq_dist_scaled(&x[i], &x[j], &h.lengthscales);
            let kval = kernel.value(h.signal_variance, r2);
            grad[d] += wij * kval;
            if i != j {
                let fac = kernel.lengthscale_factor(h.signal_variance, r2);
                for (q, g) in grad.iter_mut().take(d).enumerate() {
                    let t = (x[i][q] - x[j][q]) / h.lengthscales[q];
                    *g += wij * fac * t * t;
                }
            }
        }
        grad[d + 1] += w(i, i) * h.noise_variance;
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok((f.lml, grad))
}

fn log_bounds(d: usize) -> Vec<(f64, f64)> {
    let lg = |b: (f64, f64)| (libm::log(b.0), libm::log(b.1));
    let mut v = vec![lg(LENGTHSCALE_BOUNDS); d];
    v.push(lg(SIGNAL_VARIANCE_BOUNDS));
    v.push(lg(NOISE_VARIANCE_BOUNDS));
    v
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

/// Projected gradient ascent with Armijo backtracking. Only accepts steps
/// that increase the objective, so the result never scores below the start.
fn ascend(
    kernel: KernelKind,
    x: &[Vec<f64>],
    y: &[f64],
    start: Vec<f64>,
    bounds: &[(f64, f64)],
    max_iters: usize,
) -> Option<(Vec<f64>, f64)> {
    let mut theta = start;
    project(&mut theta, bounds);
    let (mut val, mut grad) = lml_and_grad(kernel, x, y, &theta).ok()?;
    let mut step = 1.0;
    for _ in 0..max_iters {
        let mut accepted = false;
        while step > 1e-10 {
            let mut trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            project(&mut trial, bounds);
            let moved: f64 = trial.iter().zip(&theta).zip(&grad).map(|((a, b), g)| (a - b) * g).sum();
            if moved <= 0.0 {
                break;
            }
            match lml_and_grad(kernel, x, y, &trial) {
                Ok((v, g)) if v >= val + 1e-4 * moved => {
                    let gain = v - val;
                    theta = trial;
                    val = v;
                    grad = g;
                    accepted = true;
                    step = (step * 2.0).min(1e3);
                    if gain < 1e-10 * (1.0 + val.abs()) {
                        return Some((theta, val));
                    }
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    Some((theta, val))
}

/// Fits a squared-exponential GP with `restarts` start points.
pub fn fit<R: Rng + ?Sized>(inputs: &[Vec<f64>], targets: &[f64], restarts: usize, rng: &mut R) -> Result<GpModel> {
    fit_with(inputs, targets, &FitOptions { restarts, ..FitOptions::default() }, rng)
}

/// Fits hyperparameters by maximum likelihood. The first start point is a
/// fixed default; the remaining ones are drawn log-uniformly from the
/// bounds (noise drawn from its lower part).
pub fn fit_with<R: Rng + ?Sized>(inputs: &[Vec<f64>], targets: &[f64], opts: &FitOptions, rng: &mut R) -> Result<GpModel> {
    let d = check_data(inputs, targets)?;
    if inputs.len() < 2 {
        return Err(Error::InvalidArgument("fit needs at least 2 points".into()));
    }
    let mut scaling = Scaling::from_data(inputs, targets);
    let x: Vec<Vec<f64>> = inputs.iter().map(|v| scaling.x(v)).collect();
    let mut y: Vec<f64> = targets.iter().map(|t| (t - scaling.y_mean) / scaling.y_std).collect();
    if opts.linear_trend {
        scaling.trend = ridge_trend(&x, &y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi -= scaling.trend_at(xi);
        }
    }
    let bounds = log_bounds(d);

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts.max(1));
    let mut first = vec![libm::log(0.5); d];
    first.push(0.0);
    first.push(libm::log(1e-3));
    starts.push(first);
    let uni = |rng: &mut R, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    for _ in 1..opts.restarts.max(1) {
        let mut s: Vec<f64> = (0..d).map(|_| uni(rng, libm::log(0.05), libm::log(2.0))).collect();
        s.push(uni(rng, libm::log(0.1), libm::log(10.0)));
        s.push(uni(rng, bounds[d + 1].0, libm::log(0.1)));
        starts.push(s);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        if let Some((theta, val)) = ascend(opts.kernel, &x, &y, s, &bounds, opts.max_iters) {
            if best.as_ref().is_none_or(|(_, b)| val > *b) {
                best = Some((theta, val));
            }
        }
    }
    let (theta, _) = match best {
        Some(b) => b,
        None => return Err(Error::IllConditioned { jitter: linalg::JITTER_LADDER[linalg::JITTER_LADDER.len() - 1] }),
    };
    build(opts.kernel, x, y, GpHyperparams::from_log(&theta), scaling)
}

/// Ridge penalty on the trend slopes (the intercept is unpenalized).
const TREND_RIDGE: f64 = 0.1;

fn ridge_trend(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = x[0].len();
    let mut rows: Vec<Vec<f64>> = x.iter().map(|xi| core::iter::once(1.0).chain(xi.iter().copied()).collect()).collect();
    let mut rhs = y.to_vec();
    for j in 0..d {
        let mut r = vec![0.0; d + 1];
        r[j + 1] = libm::sqrt(TREND_RIDGE);
        rows.push(r);
        rhs.push(0.0);
    }
    linalg::least_squares(&Matrix::from_rows(&rows), &rhs)
}

fn build(kernel: KernelKind, x: Vec<Vec<f64>>, y: Vec<f64>, hyper: GpHyperparams, scaling: Scaling) -> Result<GpModel> {
    let f = factor(kernel, &x, &y, &hyper)?;
    Ok(GpModel { kernel, inputs: x, targets: y, hyper, chol: f.chol, alpha: f.alpha, jitter: f.jitter, scaling })
}

impl GpModel {
    /// Builds a model with the given hyperparameters. With `normalize`
    /// false, inputs and targets are used in the caller's units.
    pub fn with_hyperparams(
        inputs: &[Vec<f64>],
        targets: &[f64],
        hyper: GpHyperparams,
        kernel: KernelKind,
        normalize: bool,
    ) -> Result<GpModel> {
        let d = check_data(inputs, targets)?;
        hyper.validate(d)?;
        let scaling = if normalize { Scaling::from_data(inputs, targets) } else { Scaling::identity(d) };
        let x = inputs.iter().map(|v| scaling.x(v)).collect();
        let y = targets.iter().map(|t| (t - scaling.y_mean) / scaling.y_std).collect();
        build(kernel, x, y, hyper, scaling)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.scaling.x_min.len()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Diagonal jitter the factorization needed (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.targets.len() as f64;
        let log_det_half: f64 = (0..self.targets.len()).map(|i| libm::log(self.chol.get(i, i))).sum();
        -0.5 * linalg::dot(&self.targets, &self.alpha) - log_det_half - 0.5 * n * libm::log(2.0 * PI)
    }

    /// Predictive mean and standard deviation of the latent function at
    /// `query`, in target units.
    pub fn posterior(&self, query: &[f64]) -> (f64, f64) {
        assert_eq!(query.len(), self.dim(), "query dimension mismatch");
        let q = self.scaling.x(query);
        let h = &self.hyper;
        let kstar: Vec<f64> =
            self.inputs.iter().map(|x| self.kernel.value(h.signal_variance, sq_dist_scaled(x, &q, &h.lengthscales))).collect();
        let mean = self.scaling.trend_at(&q) + linalg::dot(&kstar, &self.alpha);
        let v = linalg::solve_lower(&self.chol, &kstar);
        let var = (h.signal_variance - linalg::dot(&v, &v)).max(0.0);
        (self.scaling.y_mean + self.scaling.y_std * mean, self.scaling.y_std * libm::sqrt(var))
    }

    /// Standard deviation used to standardize the targets.
    pub fn target_scale(&self) -> f64 {
        self.scaling.y_std
    }

    /// Prior standard deviation of the latent function, in target units.
    pub fn prior_stddev(&self) -> f64 {
        self.scaling.y_std * libm::sqrt(self.hyper.signal_variance)
    }
}

/// Log marginal likelihood for explicit hyperparameters on already
/// normalized data. Exposed for cross-checking.
pub fn log_marginal_likelihood(kernel: KernelKind, inputs: &[Vec<f64>], targets: &[f64], hyper: &GpHyperparams) -> Result<f64> {
    let d = check_data(inputs, targets)?;
    hyper.validate(d)?;
    Ok(factor(kernel, inputs, targets, hyper)?.lml)
}

/// Kernel evaluation between two raw vectors.
pub fn kernel_value(kernel: KernelKind, hyper: &GpHyperparams, a: &[f64], b: &[f64]) -> f64 {
    kernel.value(hyper.signal_variance, sq_dist_scaled(a, b, &hyper.lengthscales))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn bowl() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9], vec![0.7, 0.6], vec![0.5, 0.1]];
        let ys = xs.iter().map(|x| (x[0] - 0.4) * (x[0] - 0.4) + 2.0 * (x[1] - 0.5) * (x[1] - 0.5)).collect();
        (xs, ys)
    }

    #[test]
    fn interpolates_noiseless_bowl() {
        let (xs, ys) = bowl();
        let m = fit(&xs, &ys, 8, &mut stream(1, "gp")).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mu, _) = m.posterior(x);
            assert!((mu - y).abs() < 1e-6, "{mu} vs {y}");
        }
    }

    #[test]
    fn constant_targets() {
        let (xs, _) = bowl();
        let ys = vec![4.2; xs.len()];
        let m = fit(&xs, &ys, 4, &mut stream(1, "gp")).unwrap();
        for q in [[0.1, 0.1], [3.0, -2.0], [0.5, 0.5]] {
            assert!((m.posterior(&q).0 - 4.2).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (xs, ys) = bowl();
        for kernel in [KernelKind::SquaredExponential, KernelKind::Matern52] {
            let theta = vec![libm::log(0.4), libm::log(0.7), libm::log(1.3), libm::log(1e-2)];
            let (_, g) = lml_and_grad(kernel, &xs, &ys, &theta).unwrap();
            for k in 0..theta.len() {
                let h = 1e-6;
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (lml_and_grad(kernel, &xs, &ys, &tp).unwrap().0 - lml_and_grad(kernel, &xs, &ys, &tm).unwrap().0) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{kernel:?} {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let (xs, ys) = bowl();
        let m = fit(&xs, &ys, 4, &mut stream(2, "gp")).unwrap();
        let (_, sd) = m.posterior(&[50.0, -50.0]);
        assert!(sd >= 0.9 * m.prior_stddev());
    }

    #[test]
    fn conflicting_duplicates_are_regularized() {
        let xs = vec![vec![0.5], vec![0.5], vec![0.1]];
        let ys = vec![1.0, 2.0, 0.0];
        let m = fit(&xs, &ys, 3, &mut stream(3, "gp")).unwrap();
        assert!(m.hyperparams().noise_variance > 1e-4);
        let zero = GpHyperparams { lengthscales: vec![0.3], signal_variance: 1.0, noise_variance: 0.0 };
        let m = GpModel::with_hyperparams(&xs, &ys, zero, KernelKind::SquaredExponential, false).unwrap();
        assert!(m.jitter() > 0.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let (xs, ys) = bowl();
        let a = fit(&xs, &ys, 5, &mut stream(9, "gp")).unwrap();
        let b = fit(&xs, &ys, 5, &mut stream(9, "gp")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(fit(&[vec![0.0]], &[1.0], 2, &mut stream(0, "gp")).is_err());
        assert!(fit(&[vec![0.0], vec![1.0, 2.0]], &[1.0, 2.0], 2, &mut stream(0, "gp")).is_err());
        assert!(matches!(fit(&[vec![0.0], vec![f64::NAN]], &[1.0, 2.0], 2, &mut stream(0, "gp")), Err(Error::InvalidData(_))));
    }

    #[test]
    fn linear_trend_extrapolates() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i) / 5.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x[0]).collect();
        let opts = FitOptions { restarts: 3, linear_trend: true, ..FitOptions::default() };
        let m = fit_with(&xs, &ys, &opts, &mut stream(4, "gp")).unwrap();
        let flat = fit(&xs, &ys, 3, &mut stream(4, "gp")).unwrap();
        let far = [100.0];
        // ridge shrinks the slope a little, so only the trend direction is pinned
        assert!(m.posterior(&far).0 < -150.0);
        // the constant-mean model reverts toward the data mean
        assert!((flat.posterior(&far).0 - 2.0).abs() < 1.0);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((m.posterior(x).0 - y).abs() < 1e-2);
        }
    }
}
