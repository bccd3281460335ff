//! Constrained Bayesian optimization of the hardware configuration.
//!
//! Tuning runs in two phases. Phase 1 fixes the CPU clock with a cheap
//! profiling rule: the lowest clock whose preprocessing does not become the
//! pipeline bottleneck. Phase 2 searches the remaining knobs with two
//! independent GP surrogates (energy objective, latency constraint) and the
//! constrained acquisition `PF × EI`, evaluated exhaustively over the
//! untried grid points.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{self, index_of, DeviceProfile, HardwareConfig, OracleResult};
use crate::gp::{self, FitOptions, GpModel};
use crate::rng::stream;
use crate::stats::{normal_cdf, normal_pdf};
use crate::{Error, Result};

/// Expected improvement for minimization, `z = best − mean − xi`.
pub fn expected_improvement(mean: f64, stddev: f64, best_feasible: f64, xi: f64) -> f64 {
    let z = best_feasible - mean - xi;
    if stddev <= 0.0 {
        return z.max(0.0);
    }
    let u = z / stddev;
    (z * normal_cdf(u) + stddev * normal_pdf(u)).max(0.0)
}

/// Probability that a Gaussian latency meets the SLO.
pub fn prob_feasible(mean_latency: f64, stddev_latency: f64, slo_ms: f64) -> f64 {
    if stddev_latency <= 0.0 {
        return if mean_latency <= slo_ms { 1.0 } else { 0.0 };
    }
    normal_cdf((slo_ms - mean_latency) / stddev_latency)
}

/// Mean and standard deviation of the number of uniform draws (with
/// replacement) until one of `n_near_optimal` good points out of `n_total`
/// is hit.
pub fn rs_expected_trials(n_near_optimal: usize, n_total: usize) -> Result<(f64, f64)> {
    if n_near_optimal == 0 || n_near_optimal > n_total {
        return Err(Error::InvalidArgument("need 0 < n_near_optimal <= n_total".into()));
    }
    let p = n_near_optimal as f64 / n_total as f64;
    Ok((1.0 / p, libm::sqrt(1.0 - p) / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CboSettings {
    pub xi: f64,
    pub n_initial_random: usize,
    pub rng_seed: u64,
    pub gp_restarts: usize,
}

impl Default for CboSettings {
    fn default() -> Self {
        CboSettings { xi: 0.1, n_initial_random: 5, rng_seed: 0, gp_restarts: gp::DEFAULT_RESTARTS }
    }
}

impl CboSettings {
    pub fn with_seed(seed: u64) -> Self {
        CboSettings { rng_seed: seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidArgument("xi must be >= 0".into()));
        }
        if self.n_initial_random == 0 {
            return Err(Error::InvalidArgument("n_initial_random must be >= 1".into()));
        }
        if self.gp_restarts == 0 {
            return Err(Error::InvalidArgument("gp_restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Constrained acquisition `PF × EI`. Without a feasible incumbent it is
/// `PF` alone. `settings.xi` is in standardized energy units, so the
/// result ranks candidates identically under any rescaling of energy.
pub fn acquisition(
    energy_model: &GpModel,
    latency_model: &GpModel,
    candidate: &[f64],
    best_feasible_energy: Option<f64>,
    settings: &CboSettings,
    slo_ms: f64,
) -> f64 {
    let (mt, st) = latency_model.posterior(candidate);
    let pf = prob_feasible(mt, st, slo_ms);
    match best_feasible_energy {
        None => pf,
        Some(best) => {
            if pf == 0.0 {
                return 0.0;
            }
            let (me, se) = energy_model.posterior(candidate);
            pf * expected_improvement(me, se, best, settings.xi * energy_model.target_scale())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningProblem {
    pub profile: DeviceProfile,
    pub slo_ms: f64,
    pub max_evals: usize,
    pub near_optimal_tolerance: f64,
    /// When false, batch size is fixed at the smallest grid value.
    pub batch_dimension_enabled: bool,
    /// Noiseless optimum energy to judge near-optimality against; computed
    /// by exhaustive search when absent.
    pub oracle_energy_mj: Option<f64>,
}

impl TuningProblem {
    pub fn new(profile: DeviceProfile, slo_ms: f64, max_evals: usize) -> Self {
        TuningProblem { profile, slo_ms, max_evals, near_optimal_tolerance: 0.05, batch_dimension_enabled: true, oracle_energy_mj: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if !(self.slo_ms > 0.0) {
            return Err(Error::InvalidArgument("slo_ms must be > 0".into()));
        }
        if !(self.near_optimal_tolerance > 0.0 && self.near_optimal_tolerance < 1.0) {
            return Err(Error::InvalidArgument("near_optimal_tolerance must lie in (0, 1)".into()));
        }
        if self.max_evals < 6 {
            return Err(Error::InvalidArgument("max_evals must be >= 6".into()));
        }
        Ok(())
    }

    /// Every grid configuration allowed by the batch setting.
    pub fn search_space(&self) -> Vec<HardwareConfig> {
        let all = device::grid_enumerate(&self.profile);
        if self.batch_dimension_enabled {
            all
        } else {
            let b = self.profile.grid.batch_sizes[0];
            all.into_iter().filter(|c| c.batch_size == b).collect()
        }
    }

    /// Noiseless exhaustive optimum over the search space.
    pub fn noiseless_oracle(&self) -> Result<OracleResult> {
        let quiet = self.profile.without_noise();
        device::grid_search_over(&quiet, &self.search_space(), self.slo_ms, 1, &mut stream(0, "oracle"))
    }

    /// Search-space configurations whose noiseless energy is within the
    /// tolerance of the optimum and whose noiseless latency meets the SLO.
    pub fn near_optimal_set(&self, oracle_energy_mj: f64) -> Vec<HardwareConfig> {
        self.search_space().into_iter().filter(|c| self.is_near_optimal(c, oracle_energy_mj)).collect()
    }

    fn is_near_optimal(&self, c: &HardwareConfig, oracle_energy_mj: f64) -> bool {
        let quiet = self.profile.without_noise();
        let st = device::stage_times(&quiet, c);
        let energy = st.power_w * st.latency_ms / f64::from(c.batch_size);
        st.latency_ms <= self.slo_ms && energy <= (1.0 + self.near_optimal_tolerance) * oracle_energy_mj
    }

    fn oracle_energy(&self) -> Result<f64> {
        match self.oracle_energy_mj {
            Some(e) => Ok(e),
            None => Ok(self.noiseless_oracle()?.best_energy_mj),
        }
    }
}

/// The two benchmark SLO settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    /// 1.2 × the lowest achievable batch-1 latency, batch size fixed at 1.
    Tight,
    /// 1.25 × the latency of the unconstrained energy optimum, batch tuned.
    Relaxed,
}

impl Benchmark {
    pub fn problem(self, profile: &DeviceProfile, max_evals: usize) -> Result<TuningProblem> {
        let mut p = TuningProblem::new(profile.clone(), f64::INFINITY, max_evals);
        match self {
            Benchmark::Tight => {
                p.batch_dimension_enabled = false;
                p.slo_ms = 1.2 * p.noiseless_oracle()?.min_latency_ms;
            }
            Benchmark::Relaxed => {
                p.slo_ms = 1.25 * p.noiseless_oracle()?.best_latency_ms;
            }
        }
        let oracle = p.noiseless_oracle()?;
        p.oracle_energy_mj = Some(oracle.best_energy_mj);
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: HardwareConfig,
    pub latency_ms: f64,
    pub energy_mj: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cbo,
    RandomSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub method: Method,
    pub slo_ms: f64,
    pub best_config: Option<HardwareConfig>,
    pub best_energy_mj: Option<f64>,
    pub evaluations: Vec<Observation>,
    /// 1-based index of the first near-optimal evaluation.
    pub evals_to_near_optimal: Option<usize>,
    pub oracle_energy_mj: f64,
    pub simulated_wall_time_s: f64,
    /// True when no evaluation met the SLO.
    pub feasibility_failure: bool,
    /// CPU clock fixed by phase 1 (CBO only).
    pub phase1_cpu_freq: Option<f64>,
}

impl TuningReport {
    /// Evaluations to near-optimal, counting a miss as `max_evals + 1`.
    pub fn evals_or_penalty(&self, max_evals: usize) -> usize {
        self.evals_to_near_optimal.unwrap_or(max_evals + 1)
    }
}

/// Phase 1: lowest CPU clock whose batch-1 preprocessing is no slower than
/// compute with the GPU pinned at its maximum and memory at its maximum.
pub fn phase1_cpu(profile: &DeviceProfile) -> f64 {
    let g = &profile.grid;
    let mut c = HardwareConfig {
        cpu_freq: g.max_cpu(),
        gpu_min_freq: g.max_gpu(),
        gpu_max_freq: g.max_gpu(),
        mem_freq: g.max_mem(),
        batch_size: g.batch_sizes[0],
    };
    for &cpu in &g.cpu_freqs {
        c.cpu_freq = cpu;
        let st = device::stage_times(profile, &c);
        if st.preprocess_ms <= st.compute_ms {
            return cpu;
        }
    }
    g.max_cpu()
}

/// Surrogate input vector: log GPU clocks, log memory clock and log batch
/// size, each scaled to [0, 1] over its grid range. Pinned dimensions are
/// omitted.
pub fn features(profile: &DeviceProfile, batch_enabled: bool, c: &HardwareConfig) -> Vec<f64> {
    let g = &profile.grid;
    let unit = |v: f64, lo: f64, hi: f64| {
        let (v, lo, hi) = (libm::log(v), libm::log(lo), libm::log(hi));
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    };
    let mut f = Vec::with_capacity(4);
    if profile.gpu_min_tuning {
        f.push(unit(c.gpu_min_freq, g.min_gpu(), g.max_gpu()));
    }
    f.push(unit(c.gpu_max_freq, g.min_gpu(), g.max_gpu()));
    f.push(unit(c.mem_freq, g.mem_freqs[0], g.max_mem()));
    if batch_enabled {
        f.push(unit(f64::from(c.batch_size), f64::from(g.batch_sizes[0]), f64::from(g.max_batch())));
    }
    f
}

/// Latin hypercube on the grid: each tuned dimension is split into `n`
/// strata, one draw per stratum, strata permuted independently per
/// dimension, then mapped to the nearest grid index. Collisions and
/// out-of-space points fall back to uniform draws from the untried set.
fn latin_hypercube<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    space: &[HardwareConfig],
    cpu: f64,
    batch_enabled: bool,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let g = &profile.grid;
    let batch_list: Vec<u32> = if batch_enabled { g.batch_sizes.clone() } else { vec![g.batch_sizes[0]] };
    let gpu_n = g.gpu_freqs.len();
    let dims: Vec<usize> = {
        let mut d = Vec::new();
        if profile.gpu_min_tuning {
            d.push(gpu_n);
        }
        d.push(gpu_n);
        d.push(g.mem_freqs.len());
        d.push(batch_list.len());
        d
    };
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(dims.len());
    for &k in &dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let col = strata
            .into_iter()
            .map(|s| {
                let u = (s as f64 + rng.random::<f64>()) / n as f64;
                ((u * k as f64) as usize).min(k - 1)
            })
            .collect();
        columns.push(col);
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d = 0;
        let mut gmin = g.min_gpu();
        if profile.gpu_min_tuning {
            gmin = g.gpu_freqs[columns[d][i]];
            d += 1;
        }
        let mut gmax = g.gpu_freqs[columns[d][i]];
        if gmin > gmax {
            core::mem::swap(&mut gmin, &mut gmax);
        }
        let mem = g.mem_freqs[columns[d + 1][i]];
        let batch = batch_list[columns[d + 2][i]];
        let target = HardwareConfig { cpu_freq: cpu, gpu_min_freq: gmin, gpu_max_freq: gmax, mem_freq: mem, batch_size: batch };
        match space.iter().position(|c| *c == target) {
            Some(idx) if !chosen.contains(&idx) => chosen.push(idx),
            _ => {
                let free: Vec<usize> = (0..space.len()).filter(|j| !chosen.contains(j)).collect();
                if free.is_empty() {
                    break;
                }
                chosen.push(free[rng.random_range(0..free.len())]);
            }
        }
    }
    chosen
}

fn observe<R: Rng + ?Sized>(profile: &DeviceProfile, c: &HardwareConfig, slo_ms: f64, rng: &mut R) -> Result<Observation> {
    let m = device::measure(profile, c, rng)?;
    Ok(Observation { config: *c, latency_ms: m.latency_ms, energy_mj: m.energy_per_query_mj, feasible: m.latency_ms <= slo_ms })
}

fn finish(
    problem: &TuningProblem,
    method: Method,
    evaluations: Vec<Observation>,
    oracle_energy_mj: f64,
    phase1_cpu_freq: Option<f64>,
) -> TuningReport {
    let best = evaluations.iter().filter(|o| o.feasible).min_by(|a, b| a.energy_mj.total_cmp(&b.energy_mj));
    let evals_to_near_optimal = evaluations.iter().position(|o| problem.is_near_optimal(&o.config, oracle_energy_mj)).map(|i| i + 1);
    TuningReport {
        method,
        slo_ms: problem.slo_ms,
        best_config: best.map(|o| o.config),
        best_energy_mj: best.map(|o| o.energy_mj),
        simulated_wall_time_s: evaluations.len() as f64 * problem.profile.eval_cost_s,
        feasibility_failure: best.is_none(),
        evaluations,
        evals_to_near_optimal,
        oracle_energy_mj,
        phase1_cpu_freq,
    }
}

/// Two-phase constrained Bayesian optimization.
///
/// Both surrogates model log energy and log latency (energies span an
/// order of magnitude across the grid) and carry a ridge-fitted linear
/// prior mean. The EI incumbent is the lowest posterior mean among
/// feasible observations rather than the lowest noisy measurement.
pub fn tune(problem: &TuningProblem, settings: &CboSettings) -> Result<TuningReport> {
    problem.validate()?;
    settings.validate()?;
    let profile = &problem.profile;
    let oracle_energy = problem.oracle_energy()?;
    let seed = settings.rng_seed;
    let mut init_rng = stream(seed, "cbo/init");
    let mut measure_rng = stream(seed, "cbo/measure");
    let mut gp_rng = stream(seed, "cbo/gp");

    let cpu = phase1_cpu(profile);
    let space: Vec<HardwareConfig> = problem.search_space().into_iter().filter(|c| c.cpu_freq == cpu).collect();
    let feats: Vec<Vec<f64>> = space.iter().map(|c| features(profile, problem.batch_dimension_enabled, c)).collect();
    let budget = problem.max_evals.min(space.len());

    let mut tried = vec![false; space.len()];
    let mut evaluations: Vec<Observation> = Vec::with_capacity(budget);
    let init = latin_hypercube(profile, &space, cpu, problem.batch_dimension_enabled, settings.n_initial_random.min(budget), &mut init_rng);
    for idx in init {
        tried[idx] = true;
        evaluations.push(observe(profile, &space[idx], problem.slo_ms, &mut measure_rng)?);
    }

    let fit_opts =
        FitOptions { restarts: settings.gp_restarts, kernel: profile.surrogate_kernel, linear_trend: true, ..FitOptions::default() };
    while evaluations.len() < budget {
        let xs: Vec<Vec<f64>> = evaluations.iter().map(|o| features(profile, problem.batch_dimension_enabled, &o.config)).collect();
        let energies: Vec<f64> = evaluations.iter().map(|o| libm::log(o.energy_mj)).collect();
        let latencies: Vec<f64> = evaluations.iter().map(|o| libm::log(o.latency_ms)).collect();
        let energy_model = gp::fit_with(&xs, &energies, &fit_opts, &mut gp_rng)?;
        let latency_model = gp::fit_with(&xs, &latencies, &fit_opts, &mut gp_rng)?;
        let best = evaluations.iter().zip(&xs).filter(|(o, _)| o.feasible).map(|(_, x)| energy_model.posterior(x).0).min_by(f64::total_cmp);
        let log_slo = libm::log(problem.slo_ms);

        let mut pick: Option<(usize, f64, f64)> = None;
        for (i, f) in feats.iter().enumerate() {
            if tried[i] {
                continue;
            }
            let a = acquisition(&energy_model, &latency_model, f, best, settings, log_slo);
            let (mt, st) = latency_model.posterior(f);
            let pf = prob_feasible(mt, st, log_slo);
            let better = match pick {
                None => true,
                Some((_, ba, bpf)) => a > ba || (a == ba && pf > bpf),
            };
            if better {
                pick = Some((i, a, pf));
            }
        }
        let Some((idx, _, _)) = pick else { break };
        tried[idx] = true;
        evaluations.push(observe(profile, &space[idx], problem.slo_ms, &mut measure_rng)?);
    }
    Ok(finish(problem, Method::Cbo, evaluations, oracle_energy, Some(cpu)))
}

/// Uniform sampling without replacement over the whole search space.
pub fn random_search(problem: &TuningProblem, settings: &CboSettings) -> Result<TuningReport> {
    problem.validate()?;
    settings.validate()?;
    let oracle_energy = problem.oracle_energy()?;
    let mut space = problem.search_space();
    let mut pick_rng = stream(settings.rng_seed, "rs/sample");
    let mut measure_rng = stream(settings.rng_seed, "rs/measure");
    let budget = problem.max_evals.min(space.len());
    let (chosen, _) = space.partial_shuffle(&mut pick_rng, budget);
    let chosen: Vec<HardwareConfig> = chosen.to_vec();
    let mut evaluations = Vec::with_capacity(budget);
    for c in &chosen {
        evaluations.push(observe(&problem.profile, c, problem.slo_ms, &mut measure_rng)?);
    }
    Ok(finish(problem, Method::RandomSearch, evaluations, oracle_energy, None))
}

/// Position of a configuration's knobs within the grid, for reporting.
pub fn grid_indices(profile: &DeviceProfile, c: &HardwareConfig) -> Option<[usize; 5]> {
    let g = &profile.grid;
    Some([
        index_of(&g.cpu_freqs, c.cpu_freq)?,
        index_of(&g.gpu_freqs, c.gpu_min_freq)?,
        index_of(&g.gpu_freqs, c.gpu_max_freq)?,
        index_of(&g.mem_freqs, c.mem_freq)?,
        g.batch_sizes.iter().position(|b| *b == c.batch_size)?,
    ])
}

/// Short human-readable label, e.g. `cpu=1497.6 gpu=114.75..1300.5 mem=2133 b=16`.
pub fn describe(c: &HardwareConfig) -> String {
    alloc::format!("cpu={} gpu={}..{} mem={} b={}", c.cpu_freq, c.gpu_min_freq, c.gpu_max_freq, c.mem_freq, c.batch_size)
}
