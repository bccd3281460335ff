//! Simulated edge device with discrete DVFS knobs.
//!
//! The simulator is the ground truth every other module is validated
//! against. Latency follows a roofline over the GPU and memory clocks, with
//! CPU preprocessing pipelined in front of it and a utilization-driven GPU
//! governor choosing the effective clock between the configured minimum and
//! maximum. Energy is mean power times latency.
//!
//! `Measurement::latency_ms` is the end-to-end latency of one batch
//! (preprocessing plus compute), not a per-query figure.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gp::KernelKind;
use crate::sched::FinetuneSpec;
use crate::{Error, Result};

/// Candidate values for every knob. Each list is strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub cpu_freqs: Vec<f64>,
    /// Shared candidate set for both the minimum and maximum GPU clock.
    pub gpu_freqs: Vec<f64>,
    pub mem_freqs: Vec<f64>,
    pub batch_sizes: Vec<u32>,
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1])
}

impl FrequencyGrid {
    pub fn validate(&self) -> Result<()> {
        let ok_f = |name: &str, v: &[f64]| {
            if !strictly_increasing(v) || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                Err(Error::InvalidProfile(format!("{name} must be non-empty, positive and strictly increasing")))
            } else {
                Ok(())
            }
        };
        ok_f("cpu_freqs", &self.cpu_freqs)?;
        ok_f("gpu_freqs", &self.gpu_freqs)?;
        ok_f("mem_freqs", &self.mem_freqs)?;
        if !strictly_increasing(&self.batch_sizes) || self.batch_sizes[0] == 0 {
            return Err(Error::InvalidProfile("batch_sizes must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn max_cpu(&self) -> f64 {
        *self.cpu_freqs.last().expect("validated grid")
    }

    pub fn min_gpu(&self) -> f64 {
        self.gpu_freqs[0]
    }

    pub fn max_gpu(&self) -> f64 {
        *self.gpu_freqs.last().expect("validated grid")
    }

    pub fn max_mem(&self) -> f64 {
        *self.mem_freqs.last().expect("validated grid")
    }

    pub fn max_batch(&self) -> u32 {
        *self.batch_sizes.last().expect("validated grid")
    }
}

/// One point of the tuning space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub cpu_freq: f64,
    pub gpu_min_freq: f64,
    pub gpu_max_freq: f64,
    pub mem_freq: f64,
    pub batch_size: u32,
}

impl HardwareConfig {
    /// Number of knob files that differ between two configurations. Batch
    /// size counts as one knob.
    pub fn knobs_changed(&self, other: &HardwareConfig) -> usize {
        usize::from(self.cpu_freq != other.cpu_freq)
            + usize::from(self.gpu_min_freq != other.gpu_min_freq)
            + usize::from(self.gpu_max_freq != other.gpu_max_freq)
            + usize::from(self.mem_freq != other.mem_freq)
            + usize::from(self.batch_size != other.batch_size)
    }

    pub fn with_batch(mut self, batch_size: u32) -> Self {
        self.batch_size = batch_size;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWorkloadSpec {
    pub name: String,
    /// GFLOP per query.
    pub flops_per_query: f64,
    /// GB of memory traffic per query.
    pub bytes_per_query: f64,
    /// CPU preprocessing per query at the highest CPU clock, in ms.
    pub preprocess_ms_base: f64,
    pub params_millions: f64,
}

impl ModelWorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("flops_per_query", self.flops_per_query),
            ("bytes_per_query", self.bytes_per_query),
            ("preprocess_ms_base", self.preprocess_ms_base),
            ("params_millions", self.params_millions),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidProfile(format!("workload {}: {name} must be > 0", self.name)));
            }
        }
        Ok(())
    }

    /// Arithmetic intensity in FLOP/byte.
    pub fn arithmetic_intensity(&self) -> f64 {
        self.flops_per_query / self.bytes_per_query
    }
}

/// Hidden linear law by which a co-located fine-tuning iteration inflates
/// inference latency: `added_ms = flops_coeff · FLOPs_ft + ai_coeff · AI_ft`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceLaw {
    /// ms per GFLOP of fine-tuning work per iteration.
    pub flops_coeff: f64,
    /// ms per FLOP/byte of fine-tuning arithmetic intensity.
    pub ai_coeff: f64,
}

impl InterferenceLaw {
    pub fn added_latency_ms(&self, ft_flops_gflop: f64, ft_ai: f64) -> f64 {
        self.flops_coeff * ft_flops_gflop + self.ai_coeff * ft_ai
    }
}

/// A named fine-tuning load shipped with a profile together with the
/// inflation it should produce, so the hidden law can be checked by
/// re-evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFinetune {
    pub name: String,
    pub flops_per_iter: f64,
    pub ai: f64,
    pub expected_inflation_ms: f64,
}

fn default_true() -> bool {
    true
}

/// A synthetic device plus the model being served on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub grid: FrequencyGrid,
    pub workload: ModelWorkloadSpec,
    /// Other workloads that can be swapped in with [`DeviceProfile::with_workload`].
    #[serde(default)]
    pub workloads: Vec<ModelWorkloadSpec>,
    /// GFLOP/s per MHz of effective GPU clock.
    pub compute_throughput_coeff: f64,
    /// GB/s per MHz of memory clock.
    pub mem_bandwidth_coeff: f64,
    pub static_power_w: f64,
    pub gpu_power_coeff: f64,
    pub gpu_power_exponent: f64,
    pub mem_power_coeff: f64,
    pub mem_power_exponent: f64,
    pub cpu_power_coeff: f64,
    pub cpu_power_exponent: f64,
    pub governor_utilization_target: f64,
    pub noise_sigma_base: f64,
    pub noise_sigma_small_batch: f64,
    pub eval_cost_s: f64,
    pub rng_seed: u64,
    /// When false, the minimum GPU clock is pinned to the grid minimum.
    #[serde(default)]
    pub gpu_min_tuning: bool,
    #[serde(default)]
    pub surrogate_kernel: KernelKind,
    pub interference: InterferenceLaw,
    #[serde(default)]
    pub reference_finetune: Option<ReferenceFinetune>,
    /// Whether noise is applied; cleared by [`DeviceProfile::without_noise`].
    #[serde(default = "default_true", skip_serializing_if = "Clone::clone")]
    pub noise_enabled: bool,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.workload.validate()?;
        for w in &self.workloads {
            w.validate()?;
        }
        let positive = [
            ("compute_throughput_coeff", self.compute_throughput_coeff),
            ("mem_bandwidth_coeff", self.mem_bandwidth_coeff),
            ("static_power_w", self.static_power_w),
            ("gpu_power_coeff", self.gpu_power_coeff),
            ("mem_power_coeff", self.mem_power_coeff),
            ("cpu_power_coeff", self.cpu_power_coeff),
            ("interference.flops_coeff", self.interference.flops_coeff),
            ("interference.ai_coeff", self.interference.ai_coeff),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidProfile(format!("{name} must be > 0")));
            }
        }
        for (name, e) in [
            ("gpu_power_exponent", self.gpu_power_exponent),
            ("mem_power_exponent", self.mem_power_exponent),
            ("cpu_power_exponent", self.cpu_power_exponent),
        ] {
            if !(1.0..=3.0).contains(&e) {
                return Err(Error::InvalidProfile(format!("{name} must lie in [1, 3]")));
            }
        }
        for (name, s) in [("noise_sigma_base", self.noise_sigma_base), ("noise_sigma_small_batch", self.noise_sigma_small_batch)] {
            if !(0.0..0.5).contains(&s) {
                return Err(Error::InvalidProfile(format!("{name} must lie in [0, 0.5)")));
            }
        }
        let g = self.governor_utilization_target;
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::InvalidProfile("governor_utilization_target must lie in (0, 1]".into()));
        }
        if !(self.eval_cost_s.is_finite() && self.eval_cost_s >= 0.0) {
            return Err(Error::InvalidProfile("eval_cost_s must be >= 0".into()));
        }
        Ok(())
    }

    /// The same device serving a different workload from its catalog.
    pub fn with_workload(&self, name: &str) -> Result<DeviceProfile> {
        if self.workload.name == name {
            return Ok(self.clone());
        }
        let w = self
            .workloads
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("profile {} has no workload named {name}", self.name)))?;
        let mut p = self.clone();
        p.workload = w.clone();
        Ok(p)
    }

    pub fn without_noise(&self) -> DeviceProfile {
        let mut p = self.clone();
        p.noise_enabled = false;
        p
    }

    /// All knobs at their grid maximum, governor floor at the grid minimum.
    pub fn default_config(&self, batch_size: u32) -> HardwareConfig {
        HardwareConfig {
            cpu_freq: self.grid.max_cpu(),
            gpu_min_freq: self.grid.min_gpu(),
            gpu_max_freq: self.grid.max_gpu(),
            mem_freq: self.grid.max_mem(),
            batch_size,
        }
    }

    pub fn validate_config(&self, c: &HardwareConfig) -> Result<()> {
        let g = &self.grid;
        let on = |v: f64, list: &[f64]| list.contains(&v);
        if !on(c.cpu_freq, &g.cpu_freqs) {
            return Err(Error::InvalidConfig(format!("cpu_freq {} not on grid", c.cpu_freq)));
        }
        if !on(c.gpu_min_freq, &g.gpu_freqs) || !on(c.gpu_max_freq, &g.gpu_freqs) {
            return Err(Error::InvalidConfig(format!("gpu range {}..{} not on grid", c.gpu_min_freq, c.gpu_max_freq)));
        }
        if c.gpu_min_freq > c.gpu_max_freq {
            return Err(Error::InvalidConfig("gpu_min_freq exceeds gpu_max_freq".into()));
        }
        if !on(c.mem_freq, &g.mem_freqs) {
            return Err(Error::InvalidConfig(format!("mem_freq {} not on grid", c.mem_freq)));
        }
        if !g.batch_sizes.contains(&c.batch_size) {
            return Err(Error::InvalidConfig(format!("batch_size {} not on grid", c.batch_size)));
        }
        Ok(())
    }

    fn power_law(coeff: f64, exponent: f64, mhz: f64) -> f64 {
        coeff * libm::pow(mhz / 1000.0, exponent)
    }

    pub fn gpu_power_w(&self, mhz: f64) -> f64 {
        Self::power_law(self.gpu_power_coeff, self.gpu_power_exponent, mhz)
    }

    pub fn mem_power_w(&self, mhz: f64) -> f64 {
        Self::power_law(self.mem_power_coeff, self.mem_power_exponent, mhz)
    }

    pub fn cpu_power_w(&self, mhz: f64) -> f64 {
        Self::power_law(self.cpu_power_coeff, self.cpu_power_exponent, mhz)
    }

    /// Power with every component busy at the configured clocks (GPU at its
    /// maximum).
    pub fn full_power_w(&self, c: &HardwareConfig) -> f64 {
        self.static_power_w + self.cpu_power_w(c.cpu_freq) + self.gpu_power_w(c.gpu_max_freq) + self.mem_power_w(c.mem_freq)
    }

    /// Relative latency noise for a batch size, interpolated in log2(batch)
    /// from the batch-1 value to the value at the largest grid batch.
    pub fn noise_sigma(&self, batch_size: u32) -> f64 {
        if !self.noise_enabled {
            return 0.0;
        }
        let bmax = self.grid.max_batch().max(1) as f64;
        let t = if bmax <= 1.0 { 0.0 } else { (libm::log2(batch_size.max(1) as f64) / libm::log2(bmax)).clamp(0.0, 1.0) };
        self.noise_sigma_small_batch + (self.noise_sigma_base - self.noise_sigma_small_batch) * t
    }
}

/// Noiseless breakdown of one batch on the simulated device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTimes {
    /// CPU preprocessing for the whole batch.
    pub preprocess_ms: f64,
    /// Roofline GPU time for the whole batch at the effective clock.
    pub compute_ms: f64,
    pub latency_ms: f64,
    pub utilization: f64,
    pub demand_freq: f64,
    pub effective_gpu_freq: f64,
    /// Mean power over the batch, in watts.
    pub power_w: f64,
}

fn pipelined(preprocess_ms: f64, compute_ms: f64, batch: f64) -> f64 {
    preprocess_ms.max(compute_ms) + preprocess_ms.min(compute_ms) / batch
}

/// Noiseless latency/power model for one batch.
pub fn stage_times(profile: &DeviceProfile, config: &HardwareConfig) -> StageTimes {
    let w = &profile.workload;
    let b = f64::from(config.batch_size);
    let preprocess_ms = b * w.preprocess_ms_base * (profile.grid.max_cpu() / config.cpu_freq);
    let flop_ms = |f: f64| b * w.flops_per_query / (profile.compute_throughput_coeff * f) * 1000.0;
    let mem_ms = b * w.bytes_per_query / (profile.mem_bandwidth_coeff * config.mem_freq) * 1000.0;
    let compute_at = |f: f64| flop_ms(f).max(mem_ms);

    let at_max = pipelined(preprocess_ms, compute_at(config.gpu_max_freq), b);
    let utilization = flop_ms(config.gpu_max_freq) / at_max;
    let demand_freq = config.gpu_max_freq * (utilization / profile.governor_utilization_target).min(1.0);
    let effective_gpu_freq = demand_freq.clamp(config.gpu_min_freq, config.gpu_max_freq);

    let compute_ms = compute_at(effective_gpu_freq);
    let latency_ms = pipelined(preprocess_ms, compute_ms, b);
    let cpu_active = (preprocess_ms / latency_ms).min(1.0);
    let power_w = profile.static_power_w
        + profile.cpu_power_w(config.cpu_freq) * cpu_active
        + profile.gpu_power_w(effective_gpu_freq)
        + profile.mem_power_w(config.mem_freq);
    StageTimes { preprocess_ms, compute_ms, latency_ms, utilization, demand_freq, effective_gpu_freq, power_w }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// End-to-end latency of one batch.
    pub latency_ms: f64,
    pub energy_per_query_mj: f64,
    pub noiseless_latency_ms: f64,
}

/// Measures one batch at `config`. Consumes exactly one standard-normal
/// draw from `rng`, whether or not noise is enabled.
pub fn measure<R: Rng + ?Sized>(profile: &DeviceProfile, config: &HardwareConfig, rng: &mut R) -> Result<Measurement> {
    profile.validate_config(config)?;
    let st = stage_times(profile, config);
    let z: f64 = rng.sample(StandardNormal);
    let sigma = profile.noise_sigma(config.batch_size);
    let latency_ms = st.latency_ms * libm::exp(sigma * z);
    Ok(Measurement {
        latency_ms,
        energy_per_query_mj: st.power_w * latency_ms / f64::from(config.batch_size),
        noiseless_latency_ms: st.latency_ms,
    })
}

/// Measures one inference batch while a fine-tuning iteration shares the
/// GPU. Latency grows by the profile's hidden interference law; energy is
/// charged at full power draw for the whole (inflated) duration.
pub fn measure_concurrent<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    ft: &FinetuneSpec,
    rng: &mut R,
) -> Result<Measurement> {
    let base = measure(profile, config, rng)?;
    if ft.flops_per_iter == 0.0 && ft.ai == 0.0 {
        return Ok(base);
    }
    let added = profile.interference.added_latency_ms(ft.flops_per_iter, ft.ai);
    let latency_ms = base.latency_ms + added;
    Ok(Measurement {
        latency_ms,
        energy_per_query_mj: profile.full_power_w(config) * latency_ms / f64::from(config.batch_size),
        noiseless_latency_ms: base.noiseless_latency_ms + added,
    })
}

/// Every configuration of the grid. The minimum GPU clock ranges over the
/// grid (not above the maximum) only when the profile enables it.
pub fn grid_enumerate(profile: &DeviceProfile) -> Vec<HardwareConfig> {
    let g = &profile.grid;
    let mut out = Vec::new();
    for &cpu in &g.cpu_freqs {
        for (imax, &gmax) in g.gpu_freqs.iter().enumerate() {
            let mins: &[f64] = if profile.gpu_min_tuning { &g.gpu_freqs[..=imax] } else { &g.gpu_freqs[..1] };
            for &gmin in mins {
                for &mem in &g.mem_freqs {
                    for &batch in &g.batch_sizes {
                        out.push(HardwareConfig {
                            cpu_freq: cpu,
                            gpu_min_freq: gmin,
                            gpu_max_freq: gmax,
                            mem_freq: mem,
                            batch_size: batch,
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub latency_ms: f64,
    pub energy_mj: f64,
    pub config: HardwareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_config: HardwareConfig,
    pub best_energy_mj: f64,
    pub best_latency_ms: f64,
    /// Lowest mean latency over every evaluated configuration.
    pub min_latency_ms: f64,
    pub n_configs: usize,
    pub n_feasible: usize,
    pub n_measurements: usize,
    pub simulated_wall_time_s: f64,
    pub pareto: Vec<ParetoPoint>,
}

/// Latency/energy frontier: points not dominated in both coordinates,
/// ordered by increasing latency.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<ParetoPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms).then(a.energy_mj.total_cmp(&b.energy_mj)));
    let mut out: Vec<ParetoPoint> = Vec::new();
    let mut best = f64::INFINITY;
    for p in sorted {
        if p.energy_mj < best {
            best = p.energy_mj;
            out.push(p);
        }
    }
    out
}

/// Measures every configuration `replicas` times and averages. Returns the
/// points in input order.
pub fn measure_all<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    configs: &[HardwareConfig],
    replicas: usize,
    rng: &mut R,
) -> Result<Vec<ParetoPoint>> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be >= 1".to_string()));
    }
    let mut out = Vec::with_capacity(configs.len());
    for c in configs {
        let (mut lat, mut en) = (0.0, 0.0);
        for _ in 0..replicas {
            let m = measure(profile, c, rng)?;
            lat += m.latency_ms;
            en += m.energy_per_query_mj;
        }
        out.push(ParetoPoint { latency_ms: lat / replicas as f64, energy_mj: en / replicas as f64, config: *c });
    }
    Ok(out)
}

/// Oracle summary of already measured points.
pub fn oracle_from_points(points: &[ParetoPoint], slo_ms: f64, replicas: usize, eval_cost_s: f64) -> Result<OracleResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no configurations to search".to_string()));
    }
    let min_latency = points.iter().map(|p| p.latency_ms).fold(f64::INFINITY, f64::min);
    let feasible: Vec<ParetoPoint> = points.iter().filter(|p| p.latency_ms <= slo_ms).copied().collect();
    let best = feasible
        .iter()
        .min_by(|a, b| a.energy_mj.total_cmp(&b.energy_mj))
        .copied()
        .ok_or(Error::InfeasibleSlo { slo_ms, min_latency_ms: min_latency })?;
    let n_measurements = points.len() * replicas;
    Ok(OracleResult {
        best_config: best.config,
        best_energy_mj: best.energy_mj,
        best_latency_ms: best.latency_ms,
        min_latency_ms: min_latency,
        n_configs: points.len(),
        n_feasible: feasible.len(),
        n_measurements,
        simulated_wall_time_s: n_measurements as f64 * eval_cost_s,
        pareto: pareto_frontier(&feasible),
    })
}

/// Exhaustive search over `configs`: every configuration is measured
/// `replicas` times and averaged.
pub fn grid_search_over<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    configs: &[HardwareConfig],
    slo_ms: f64,
    replicas: usize,
    rng: &mut R,
) -> Result<OracleResult> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no configurations to search".to_string()));
    }
    let points = measure_all(profile, configs, replicas, rng)?;
    oracle_from_points(&points, slo_ms, replicas, profile.eval_cost_s)
}

/// Grid-search oracle over the full grid of `profile`.
pub fn grid_search_oracle<R: Rng + ?Sized>(profile: &DeviceProfile, slo_ms: f64, replicas: usize, rng: &mut R) -> Result<OracleResult> {
    grid_search_over(profile, &grid_enumerate(profile), slo_ms, replicas, rng)
}

/// Position of `v` in `list`, if present.
pub(crate) fn index_of(list: &[f64], v: f64) -> Option<usize> {
    list.iter().position(|x| *x == v)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    /// A small profile for unit tests (not one of the shipped calibrations).
    pub fn small_profile() -> DeviceProfile {
        DeviceProfile {
            name: "unit".into(),
            grid: FrequencyGrid {
                cpu_freqs: vec![500.0, 1000.0, 2000.0],
                gpu_freqs: vec![200.0, 600.0, 1000.0, 1300.0],
                mem_freqs: vec![400.0, 1000.0, 1600.0],
                batch_sizes: vec![1, 2, 4],
            },
            workload: ModelWorkloadSpec {
                name: "toy".into(),
                flops_per_query: 0.8,
                bytes_per_query: 0.05,
                preprocess_ms_base: 2.5,
                params_millions: 5.3,
            },
            workloads: vec![],
            compute_throughput_coeff: 0.15,
            mem_bandwidth_coeff: 0.01,
            static_power_w: 5.0,
            gpu_power_coeff: 2.0,
            gpu_power_exponent: 2.0,
            mem_power_coeff: 0.6,
            mem_power_exponent: 1.5,
            cpu_power_coeff: 0.5,
            cpu_power_exponent: 2.5,
            governor_utilization_target: 0.75,
            noise_sigma_base: 0.03,
            noise_sigma_small_batch: 0.08,
            eval_cost_s: 10.0,
            rng_seed: 1,
            gpu_min_tuning: false,
            surrogate_kernel: KernelKind::SquaredExponential,
            interference: InterferenceLaw { flops_coeff: 0.2, ai_coeff: 1.0 },
            reference_finetune: None,
            noise_enabled: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::small_profile;
    use super::*;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn fixture_is_valid() {
        small_profile().validate().unwrap();
    }

    #[test]
    fn off_grid_config_is_rejected() {
        let p = small_profile();
        let mut c = p.default_config(1);
        c.mem_freq = 1234.0;
        let err = measure(&p, &c, &mut stream(0, "t")).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let mut c = p.default_config(1);
        c.gpu_min_freq = 1300.0;
        c.gpu_max_freq = 600.0;
        assert!(measure(&p, &c, &mut stream(0, "t")).is_err());
        assert!(measure(&p, &p.default_config(3), &mut stream(0, "t")).is_err());
    }

    #[test]
    fn noiseless_matches_closed_form() {
        let p = small_profile().without_noise();
        let c = HardwareConfig { cpu_freq: 2000.0, gpu_min_freq: 1300.0, gpu_max_freq: 1300.0, mem_freq: 1600.0, batch_size: 1 };
        let m = measure(&p, &c, &mut stream(0, "t")).unwrap();
        // governor pinned at 1300 MHz by gpu_min
        let pre: f64 = 2.5;
        let flop = 0.8 / (0.15 * 1300.0) * 1000.0;
        let mem = 0.05 / (0.01 * 1600.0) * 1000.0;
        let comp = f64::max(flop, mem);
        let lat = pre.max(comp) + pre.min(comp);
        assert_eq!(m.latency_ms, lat);
        assert_eq!(m.noiseless_latency_ms, lat);
        let power = 5.0 + 0.5 * 2.0f64.powf(2.5) * (pre / lat) + 2.0 * 1.3f64.powi(2) + 0.6 * 1.6f64.powf(1.5);
        assert!((m.energy_per_query_mj - power * lat).abs() < 1e-9);
    }

    #[test]
    fn same_stream_position_reproduces() {
        let p = small_profile();
        let c = p.default_config(2);
        let a = measure(&p, &c, &mut stream(5, "m")).unwrap();
        let b = measure(&p, &c, &mut stream(5, "m")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cpu_is_irrelevant_without_preprocessing() {
        let mut p = small_profile();
        p.workload.preprocess_ms_base = 0.0;
        for batch in [1, 2, 4] {
            let ms: Vec<Measurement> = p
                .grid
                .cpu_freqs
                .clone()
                .into_iter()
                .map(|cpu| {
                    let mut c = p.default_config(batch);
                    c.cpu_freq = cpu;
                    measure(&p, &c, &mut stream(3, "cpu")).unwrap()
                })
                .collect();
            assert!(ms.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn latency_non_increasing_in_gpu_max_and_mem() {
        let p = small_profile().without_noise();
        for c in grid_enumerate(&p) {
            let base = stage_times(&p, &c).latency_ms;
            for &g in p.grid.gpu_freqs.iter().filter(|g| **g > c.gpu_max_freq) {
                let up = stage_times(&p, &HardwareConfig { gpu_max_freq: g, ..c }).latency_ms;
                assert!(up <= base + 1e-12, "{c:?} gpu {g}");
            }
            for &m in p.grid.mem_freqs.iter().filter(|m| **m > c.mem_freq) {
                let up = stage_times(&p, &HardwareConfig { mem_freq: m, ..c }).latency_ms;
                assert!(up <= base + 1e-12, "{c:?} mem {m}");
            }
        }
    }

    #[test]
    fn grid_counts() {
        let mut p = small_profile();
        assert_eq!(grid_enumerate(&p).len(), 3 * 4 * 3 * 3);
        p.gpu_min_tuning = true;
        // pairs with min <= max over 4 values: 10
        assert_eq!(grid_enumerate(&p).len(), 3 * 10 * 3 * 3);
        assert!(grid_enumerate(&p).iter().all(|c| c.gpu_min_freq <= c.gpu_max_freq));
    }

    #[test]
    fn single_point_grid() {
        let mut p = small_profile();
        p.grid = FrequencyGrid { cpu_freqs: vec![1000.0], gpu_freqs: vec![600.0], mem_freqs: vec![1000.0], batch_sizes: vec![1] };
        assert_eq!(grid_enumerate(&p).len(), 1);
    }

    #[test]
    fn oracle_counts_and_infeasible() {
        let mut p = small_profile();
        p.grid = FrequencyGrid { cpu_freqs: vec![1000.0], gpu_freqs: vec![600.0, 1300.0], mem_freqs: vec![1000.0], batch_sizes: vec![1] };
        let r = grid_search_oracle(&p, f64::INFINITY, 3, &mut stream(1, "o")).unwrap();
        assert_eq!(r.n_measurements, 6);
        assert_eq!(r.simulated_wall_time_s, 60.0);
        let np = p.without_noise();
        let min = grid_enumerate(&np).iter().map(|c| stage_times(&np, c).latency_ms).fold(f64::INFINITY, f64::min);
        match grid_search_oracle(&np, min * 0.99, 1, &mut stream(1, "o")) {
            Err(Error::InfeasibleSlo { min_latency_ms, .. }) => assert!((min_latency_ms - min).abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn pareto_is_non_dominated() {
        let p = small_profile();
        let r = grid_search_oracle(&p, f64::INFINITY, 1, &mut stream(2, "o")).unwrap();
        for w in r.pareto.windows(2) {
            assert!(w[0].latency_ms <= w[1].latency_ms);
            assert!(w[0].energy_mj > w[1].energy_mj);
        }
        assert_eq!(r.pareto.last().unwrap().energy_mj, r.best_energy_mj);
    }

    #[test]
    fn lognormal_tail_guard() {
        let p = small_profile();
        let mut rng = stream(9, "tail");
        for c in grid_enumerate(&p) {
            let m = measure(&p, &c, &mut rng).unwrap();
            let sigma = p.noise_sigma(c.batch_size);
            assert!(m.latency_ms >= m.noiseless_latency_ms * libm::exp(-4.0 * sigma) * 0.999 || sigma == 0.0);
            assert!(m.energy_per_query_mj > 0.0);
        }
    }

    #[test]
    fn zero_finetune_is_plain_measure() {
        let p = small_profile();
        let c = p.default_config(2);
        let ft = FinetuneSpec::zero();
        let a = measure(&p, &c, &mut stream(4, "m")).unwrap();
        let b = measure_concurrent(&p, &c, &ft, &mut stream(4, "m")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interference_is_linear_in_flops() {
        let p = small_profile().without_noise();
        let c = p.default_config(1);
        let base = measure(&p, &c, &mut stream(0, "m")).unwrap().latency_ms;
        let mut ft = FinetuneSpec::zero();
        ft.flops_per_iter = 100.0;
        let one = measure_concurrent(&p, &c, &ft, &mut stream(0, "m")).unwrap().latency_ms - base;
        ft.flops_per_iter = 200.0;
        let two = measure_concurrent(&p, &c, &ft, &mut stream(0, "m")).unwrap().latency_ms - base;
        assert!((two - 2.0 * one).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_bad_profiles() {
        let mut p = small_profile();
        p.gpu_power_exponent = 3.5;
        assert!(p.validate().is_err());
        let mut p = small_profile();
        p.grid.mem_freqs = vec![1000.0, 1000.0];
        assert!(p.validate().is_err());
        let mut p = small_profile();
        p.noise_sigma_small_batch = 0.5;
        assert!(p.validate().is_err());
        let mut p = small_profile();
        p.governor_utilization_target = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn knobs_changed_counts_files() {
        let p = small_profile();
        let a = p.default_config(4);
        let mut b = a.with_batch(1);
        assert_eq!(a.knobs_changed(&b), 1);
        b.mem_freq = 400.0;
        b.cpu_freq = 500.0;
        assert_eq!(a.knobs_changed(&b), 3);
    }
}
