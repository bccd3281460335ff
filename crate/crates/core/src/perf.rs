//! Linear interference model for co-located inference and fine-tuning.
//!
//! Inference latency under a concurrent fine-tuning iteration is predicted
//! as `θ0 + θ1·FLOPs_inf + θ2·AI_inf + θ3·FLOPs_ft + θ4·AI_ft + θ5·batch`
//! with every θ non-negative, fitted by Lawson–Hanson NNLS.
//!
//! FLOPs count a multiply-accumulate as two operations. Network-level
//! arithmetic intensity is total numerator over total denominator of the
//! per-layer convolution formula.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceProfile, HardwareConfig};
use crate::linalg::{self, Matrix};
use crate::sched::FinetuneSpec;
use crate::{Error, Result};

/// Width of the feature vector feeding the classification head.
pub const HEAD_INPUT_DIM: f64 = 1280.0;
const BYTES_PER_PARAM: f64 = 4.0;

/// GFLOP of one forward pass through a dense head with `output_dim` outputs.
pub fn head_flops_gflop(output_dim: u32) -> f64 {
    2.0 * HEAD_INPUT_DIM * f64::from(output_dim) / 1e9
}

/// GB of head weights.
pub fn head_bytes_gb(output_dim: u32) -> f64 {
    BYTES_PER_PARAM * HEAD_INPUT_DIM * f64::from(output_dim) / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerShape {
    pub n: u64,
    pub c: u64,
    pub h: u64,
    pub w: u64,
    pub k: u64,
    pub p: u64,
    pub q: u64,
    pub r: u64,
    pub s: u64,
}

impl ConvLayerShape {
    pub fn validate(&self) -> Result<()> {
        let f = [self.n, self.c, self.h, self.w, self.k, self.p, self.q, self.r, self.s];
        if f.contains(&0) {
            return Err(Error::InvalidData(format!("conv layer dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn macs(&self) -> f64 {
        (self.n * self.k * self.p * self.q) as f64 * (self.c * self.r * self.s) as f64
    }

    fn elements(&self) -> f64 {
        (self.n * self.c * self.h * self.w + self.k * self.c * self.r * self.s + self.n * self.k * self.p * self.q) as f64
    }
}

/// MACs over elements touched (input, weights, output).
pub fn conv_arithmetic_intensity(shape: &ConvLayerShape) -> f64 {
    shape.macs() / shape.elements()
}

pub fn conv_flops(shape: &ConvLayerShape) -> f64 {
    2.0 * shape.macs()
}

/// Aggregate (GFLOP, arithmetic intensity) of a layer list.
pub fn network_totals(layers: &[ConvLayerShape]) -> Result<(f64, f64)> {
    if layers.is_empty() {
        return Err(Error::InvalidData("empty layer list".into()));
    }
    let (mut macs, mut elems) = (0.0, 0.0);
    for l in layers {
        l.validate()?;
        macs += l.macs();
        elems += l.elements();
    }
    Ok((2.0 * macs / 1e9, macs / elems))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFeatures {
    pub flops_inf: f64,
    pub ai_inf: f64,
    pub flops_ft: f64,
    pub ai_ft: f64,
    pub batch_size: u32,
}

impl WorkloadFeatures {
    /// Features of one inference batch of the profile's workload, with an
    /// optional concurrent fine-tuning iteration.
    pub fn of(profile: &DeviceProfile, batch_size: u32, ft: Option<&FinetuneSpec>) -> Self {
        let w = &profile.workload;
        WorkloadFeatures {
            flops_inf: f64::from(batch_size) * w.flops_per_query,
            ai_inf: w.arithmetic_intensity(),
            flops_ft: ft.map_or(0.0, |f| f.flops_per_iter),
            ai_ft: ft.map_or(0.0, |f| f.ai),
            batch_size,
        }
    }

    pub fn row(&self) -> [f64; 6] {
        [1.0, self.flops_inf, self.ai_inf, self.flops_ft, self.ai_ft, f64::from(self.batch_size)]
    }

    fn is_finite(&self) -> bool {
        self.row().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerfModelCoeffs {
    pub theta: [f64; 6],
}

pub fn predict(coeffs: &PerfModelCoeffs, features: &WorkloadFeatures) -> f64 {
    linalg::dot(&coeffs.theta, &features.row())
}

/// Scale used by the KKT tolerance: `‖A‖_F · ‖y‖`, floored at 1.
pub fn kkt_scale(a: &Matrix, y: &[f64]) -> f64 {
    let mut fro = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            fro += a.get(i, j) * a.get(i, j);
        }
    }
    (libm::sqrt(fro) * linalg::norm2(y)).max(1.0)
}

/// Checks the NNLS optimality conditions for `x` with gradient
/// `g = Aᵀ(Ax − y)`: `|g_j| ≤ tol` where `x_j > 0`, `g_j ≥ −tol` where
/// `x_j = 0`, with `tol = rel_tol · kkt_scale`.
pub fn kkt_holds(a: &Matrix, y: &[f64], x: &[f64], rel_tol: f64) -> bool {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(y).map(|(p, t)| p - t).collect();
    let g = a.tr_mul_vec(&r);
    let tol = rel_tol * kkt_scale(a, y);
    x.iter().zip(&g).all(|(xj, gj)| if *xj > 0.0 { gj.abs() <= tol } else { *xj == 0.0 && *gj >= -tol })
}

/// Lawson–Hanson active-set NNLS: `min ‖A x − y‖²` subject to `x ≥ 0`.
/// Columns are scaled to unit norm internally.
pub fn nnls(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::InvalidArgument("row count and target count differ".into()));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty system".into()));
    }
    for i in 0..m {
        for j in 0..n {
            if !a.get(i, j).is_finite() {
                return Err(Error::InvalidData(format!("non-finite feature at row {i}, column {j}")));
            }
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite target at row {i}")));
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| {
            let c = linalg::norm2(&a.column(j));
            if c > 0.0 {
                c
            } else {
                1.0
            }
        })
        .collect();
    let mut s = a.clone();
    for i in 0..m {
        for j in 0..n {
            s.set(i, j, a.get(i, j) / norms[j]);
        }
    }

    let tol = 1e-13 * (linalg::norm2(y).max(1.0)) * libm::sqrt((m * n) as f64);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let grad = |x: &[f64]| {
        let ax = s.mul_vec(x);
        let r: Vec<f64> = y.iter().zip(&ax).map(|(t, p)| t - p).collect();
        s.tr_mul_vec(&r)
    };
    let mut w = grad(&x);
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let cand = (0..n).filter(|j| !passive[*j] && w[*j] > tol).max_by(|p, q| w[*p].total_cmp(&w[*q]));
        let Some(t) = cand else { break };
        passive[t] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|j| passive[*j]).collect();
            let sub = linalg::least_squares(&s.select_columns(&cols), y);
            let mut z = vec![0.0; n];
            for (k, &j) in cols.iter().enumerate() {
                z[j] = sub[k];
            }
            if cols.iter().all(|j| z[*j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &j in &cols {
                if z[j] <= 0.0 {
                    let a = x[j] / (x[j] - z[j]);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for j in 0..n {
                x[j] += alpha * (z[j] - x[j]);
            }
            for &j in &cols {
                if x[j] <= 1e-15 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
        w = grad(&x);
    }
    Ok(x.iter().zip(&norms).map(|(v, c)| v / c).collect())
}

/// Design matrix with the intercept column.
pub fn design_matrix(rows: &[WorkloadFeatures]) -> Matrix {
    let r: Vec<Vec<f64>> = rows.iter().map(|f| f.row().to_vec()).collect();
    Matrix::from_rows(&r)
}

pub fn nnls_fit(rows: &[WorkloadFeatures], latencies: &[f64]) -> Result<PerfModelCoeffs> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("at least one training row required".into()));
    }
    if rows.len() != latencies.len() {
        return Err(Error::InvalidArgument("feature and latency counts differ".into()));
    }
    if let Some(i) = rows.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite feature in row {i}")));
    }
    let x = nnls(&design_matrix(rows), latencies)?;
    let mut theta = [0.0; 6];
    theta.copy_from_slice(&x);
    Ok(PerfModelCoeffs { theta })
}

/// Fine-tuning batch sizes and head widths swept when collecting samples.
pub const FT_BATCHES: [u32; 4] = [8, 16, 32, 64];
pub const OUTPUT_DIMS: [u32; 4] = [10, 100, 500, 1000];

/// The profile with its workload's head resized to `output_dim` outputs.
fn with_head(profile: &DeviceProfile, output_dim: u32) -> DeviceProfile {
    let mut p = profile.clone();
    p.workload.flops_per_query += head_flops_gflop(output_dim);
    p.workload.bytes_per_query += head_bytes_gb(output_dim);
    p
}

/// The `i`-th design point: (inference batch, fine-tune batch, output dim).
/// Inference batch cycles fastest; the other two advance on co-prime
/// strides so every consecutive block of 12 varies all three.
pub fn design_point(profile: &DeviceProfile, i: usize) -> (u32, u32, u32) {
    let b = &profile.grid.batch_sizes;
    (b[i % b.len()], FT_BATCHES[(i + i / b.len()) % 4], OUTPUT_DIMS[(i / 2 + i / 8) % 4])
}

/// Measures `n` co-located inference batches at `config` over the
/// deterministic design sweep.
pub fn collect_training_samples<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<WorkloadFeatures>, Vec<f64>)> {
    if n < 6 {
        return Err(Error::InvalidArgument("need at least 6 samples".into()));
    }
    let mut rows = Vec::with_capacity(n);
    let mut lat = Vec::with_capacity(n);
    for i in 0..n {
        let (batch, ft_batch, od) = design_point(profile, i);
        let p = with_head(profile, od);
        let c = config.with_batch(batch);
        let ft = FinetuneSpec::for_workload(&p, &c, ft_batch, 1, od)?;
        let m = device::measure_concurrent(&p, &c, &ft, rng)?;
        rows.push(WorkloadFeatures::of(&p, batch, Some(&ft)));
        lat.push(m.latency_ms);
    }
    Ok((rows, lat))
}

/// Median of `|predicted − observed| / observed`.
pub fn median_relative_error(coeffs: &PerfModelCoeffs, rows: &[WorkloadFeatures], latencies: &[f64]) -> f64 {
    let errs: Vec<f64> = rows.iter().zip(latencies).map(|(r, y)| libm::fabs(predict(coeffs, r) - y) / y).collect();
    crate::stats::median(&errs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> ConvLayerShape {
        ConvLayerShape { n: 1, c: 1, h: 1, w: 1, k: 1, p: 1, q: 1, r: 1, s: 1 }
    }

    #[test]
    fn conv_formulas() {
        assert_eq!(conv_arithmetic_intensity(&ones()), 1.0 / 3.0);
        assert_eq!(conv_flops(&ones()), 2.0);
        let l = ConvLayerShape { n: 1, c: 3, h: 224, w: 224, k: 32, p: 112, q: 112, r: 3, s: 3 };
        assert_eq!(l.macs(), 10_838_016.0);
        assert_eq!(l.elements(), 552_800.0);
        let l2 = ConvLayerShape { n: 2, ..l };
        assert_eq!(conv_flops(&l2), 2.0 * conv_flops(&l));
        assert!(conv_arithmetic_intensity(&l2) > conv_arithmetic_intensity(&l));
    }

    #[test]
    fn nnls_clamps_negative() {
        let a = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        let x = nnls(&a, &[-1.0, -2.0]).unwrap();
        assert_eq!(x, vec![0.0]);
        assert!(kkt_holds(&a, &[-1.0, -2.0], &x, 1e-8));
    }

    #[test]
    fn constant_target() {
        let rows = vec![WorkloadFeatures { flops_inf: 0.0, ai_inf: 0.0, flops_ft: 0.0, ai_ft: 0.0, batch_size: 0 }; 4];
        let c = nnls_fit(&rows, &[7.0; 4]).unwrap();
        assert!((c.theta[0] - 7.0).abs() < 1e-12);
        assert!(c.theta[1..].iter().all(|t| *t == 0.0));
    }

    #[test]
    fn rejects_non_finite() {
        let mut rows = vec![WorkloadFeatures { flops_inf: 1.0, ai_inf: 1.0, flops_ft: 0.0, ai_ft: 0.0, batch_size: 1 }; 2];
        rows[1].flops_inf = f64::NAN;
        assert!(matches!(nnls_fit(&rows, &[1.0, 2.0]), Err(Error::InvalidData(_))));
        rows[1].flops_inf = 1.0;
        assert!(matches!(nnls_fit(&rows, &[1.0, f64::INFINITY]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn mixed_active_set() {
        // y = 2·x0 − 3·x1 on positive data: x1 must be clamped.
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![2.0, 0.1], vec![0.5, 1.0], vec![1.5, 1.5]]);
        let y: Vec<f64> = (0..4).map(|i| 2.0 * a.get(i, 0) - 3.0 * a.get(i, 1)).collect();
        let x = nnls(&a, &y).unwrap();
        assert_eq!(x[1], 0.0);
        assert!(kkt_holds(&a, &y, &x, 1e-8));
    }
}
