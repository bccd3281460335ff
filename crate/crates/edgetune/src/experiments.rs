//! The experiments behind each subcommand. Every runner computes all of
//! its outputs in memory; nothing touches the filesystem until the caller
//! writes the returned [`Output`].

use std::path::{Path, PathBuf};

use edgetune_core::cbo::{self, Benchmark, CboSettings, TuningProblem, TuningReport};
use edgetune_core::device::{self, DeviceProfile, HardwareConfig, OracleResult};
use edgetune_core::perf::{self, ConvLayerShape, PerfModelCoeffs};
use edgetune_core::rng::stream;
use edgetune_core::sched::{self, EnergyComparison, FinetuneSpec, ScheduleReport, SchedulerPolicy, SloSchedule};
use edgetune_core::stats;
use edgetune_core::workload::{self, ArrivalStream};
use serde::Serialize;

use crate::error::{AppError, AppResult};
use crate::formats;

/// A file to be written into the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub files: Vec<Artifact>,
    pub stdout: String,
}

impl Output {
    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push(Artifact { name: name.into(), bytes });
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.push_str(s.as_ref());
        self.stdout.push('\n');
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> AppResult<Vec<PathBuf>> {
        if self.files.is_empty() {
            return Ok(Vec::new());
        }
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for a in &self.files {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes).map_err(|e| AppError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn positive(name: &str, v: f64) -> AppResult<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(AppError::Usage(format!("{name} must be > 0, got {v}")))
    }
}

fn check_batch(profile: &DeviceProfile, batch: u32) -> AppResult<()> {
    if profile.grid.batch_sizes.contains(&batch) {
        Ok(())
    } else {
        Err(AppError::Usage(format!("batch size {batch} is not on the grid {:?}", profile.grid.batch_sizes)))
    }
}

/// How the serving configuration of fit-perf and simulate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigChoice {
    /// Energy optimum of the noiseless grid whose latency is at most half
    /// the SLO, so a request can wait for one batch and still be served.
    Tuned,
    /// Every clock at its maximum.
    Max,
}

/// Resolves `choice`; `batch` pins the batch size.
pub fn serving_config(profile: &DeviceProfile, choice: ConfigChoice, slo_ms: f64, batch: Option<u32>) -> AppResult<HardwareConfig> {
    if let Some(b) = batch {
        check_batch(profile, b)?;
    }
    match choice {
        ConfigChoice::Max => Ok(profile.default_config(batch.unwrap_or_else(|| profile.grid.max_batch()))),
        ConfigChoice::Tuned => {
            positive("slo", slo_ms)?;
            let quiet = profile.without_noise();
            let configs: Vec<HardwareConfig> =
                device::grid_enumerate(&quiet).into_iter().filter(|c| batch.is_none_or(|b| c.batch_size == b)).collect();
            let oracle = device::grid_search_over(&quiet, &configs, slo_ms / 2.0, 1, &mut stream(0, "serving-config"))?;
            Ok(oracle.best_config)
        }
    }
}

// ---------------------------------------------------------------- grid search

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchArgs {
    pub slo_ms: Option<f64>,
    pub replicas: usize,
    pub batch: Option<u32>,
    pub noiseless: bool,
    pub seed: u64,
}

#[derive(Serialize)]
struct OracleFile<'a> {
    profile: &'a str,
    workload: &'a str,
    slo_ms: Option<f64>,
    seed: u64,
    replicas: usize,
    noiseless: bool,
    #[serde(flatten)]
    oracle: &'a OracleResult,
    default_config: Option<HardwareConfig>,
    default_energy_mj: Option<f64>,
    savings_fraction: Option<f64>,
}

pub fn grid_search(profile: &DeviceProfile, args: &GridSearchArgs) -> AppResult<Output> {
    if let Some(s) = args.slo_ms {
        positive("slo", s)?;
    }
    if args.replicas == 0 {
        return Err(AppError::Usage("replicas must be >= 1".into()));
    }
    if let Some(b) = args.batch {
        check_batch(profile, b)?;
    }
    let sim = if args.noiseless { profile.without_noise() } else { profile.clone() };
    let configs: Vec<HardwareConfig> =
        device::grid_enumerate(&sim).into_iter().filter(|c| args.batch.is_none_or(|b| c.batch_size == b)).collect();
    let points = device::measure_all(&sim, &configs, args.replicas, &mut stream(args.seed, "grid-search"))?;
    let slo = args.slo_ms.unwrap_or(f64::INFINITY);
    let oracle = device::oracle_from_points(&points, slo, args.replicas, sim.eval_cost_s)?;

    // the stock configuration at the optimum's batch size, when it was measured
    let stock = sim.default_config(oracle.best_config.batch_size);
    let default = points.iter().find(|p| p.config == stock);
    let file = OracleFile {
        profile: &profile.name,
        workload: &profile.workload.name,
        slo_ms: args.slo_ms,
        seed: args.seed,
        replicas: args.replicas,
        noiseless: args.noiseless,
        oracle: &oracle,
        default_config: default.map(|p| p.config),
        default_energy_mj: default.map(|p| p.energy_mj),
        savings_fraction: default.map(|p| 1.0 - oracle.best_energy_mj / p.energy_mj),
    };

    let mut out = Output::default();
    out.file("pareto.csv", formats::pareto_csv(&points));
    out.file("oracle.json", formats::json(&file));
    out.line(format!("evaluated {} configurations ({} feasible)", oracle.n_configs, oracle.n_feasible));
    out.line(format!(
        "best: {} at {:.3} mJ/query, {:.2} ms",
        cbo::describe(&oracle.best_config),
        oracle.best_energy_mj,
        oracle.best_latency_ms
    ));
    if let Some(s) = file.savings_fraction {
        out.line(format!("savings vs all-max clocks: {:.1}%", 100.0 * s));
    }
    out.line(format!("simulated wall time: {} s", oracle.simulated_wall_time_s));
    Ok(out)
}

// ---------------------------------------------------------------- tuning

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Cbo,
    Rs,
    Both,
}

impl MethodChoice {
    fn runs_cbo(self) -> bool {
        matches!(self, MethodChoice::Cbo | MethodChoice::Both)
    }

    fn runs_rs(self) -> bool {
        matches!(self, MethodChoice::Rs | MethodChoice::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneArgs {
    pub benchmark: Benchmark,
    /// Overrides the benchmark's SLO; the batch dimension stays tunable.
    pub slo_ms: Option<f64>,
    pub max_evals: usize,
    pub seed: u64,
    pub n_seeds: usize,
    pub method: MethodChoice,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    /// Evaluations until a near-optimal configuration, `max_evals + 1` for
    /// a miss, one entry per seed.
    pub evals_to_near_optimal: Vec<usize>,
    pub median: f64,
    pub mean: f64,
    pub stddev: f64,
    pub misses: usize,
}

impl MethodSummary {
    pub fn of(reports: &[TuningReport], max_evals: usize) -> Self {
        let evals: Vec<usize> = reports.iter().map(|r| r.evals_or_penalty(max_evals)).collect();
        let xs: Vec<f64> = evals.iter().map(|&e| e as f64).collect();
        MethodSummary {
            median: stats::median(&xs),
            mean: stats::mean(&xs),
            stddev: stats::std_dev(&xs),
            misses: reports.iter().filter(|r| r.evals_to_near_optimal.is_none()).count(),
            evals_to_near_optimal: evals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMoments {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneSummary {
    pub profile: String,
    pub workload: String,
    pub benchmark: Option<Benchmark>,
    pub slo_ms: f64,
    pub max_evals: usize,
    pub xi: f64,
    pub near_optimal_tolerance: f64,
    pub seeds: Vec<u64>,
    pub n_search_space: usize,
    pub n_near_optimal: usize,
    pub oracle_energy_mj: f64,
    pub random_search_analytic: TrialMoments,
    pub cbo: Option<MethodSummary>,
    pub rs: Option<MethodSummary>,
}

fn tuning_problem(profile: &DeviceProfile, args: &TuneArgs) -> AppResult<TuningProblem> {
    let mut problem = match args.slo_ms {
        Some(s) => {
            positive("slo", s)?;
            TuningProblem::new(profile.clone(), s, args.max_evals)
        }
        None => args.benchmark.problem(profile, args.max_evals)?,
    };
    problem.validate()?;
    if problem.oracle_energy_mj.is_none() {
        problem.oracle_energy_mj = Some(problem.noiseless_oracle()?.best_energy_mj);
    }
    Ok(problem)
}

/// Runs `f` for every seed, spreading seeds over the available cores.
/// Results come back in seed order.
fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> AppResult<T> + Sync) -> AppResult<Vec<T>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len()).max(1);
    if workers == 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    let results: Vec<AppResult<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            seeds.chunks(chunk).map(|part| scope.spawn(|| part.iter().map(|&s| f(s)).collect::<AppResult<Vec<T>>>())).collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(seeds.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs the tuners and returns the summary with every report, in seed
/// order, for CBO then random search.
pub fn run_tuning(profile: &DeviceProfile, args: &TuneArgs) -> AppResult<(TuneSummary, Vec<TuningReport>, Vec<TuningReport>)> {
    if args.n_seeds == 0 {
        return Err(AppError::Usage("at least one seed is required".into()));
    }
    if !(args.xi >= 0.0 && args.xi.is_finite()) {
        return Err(AppError::Usage(format!("xi must be >= 0, got {}", args.xi)));
    }
    let problem = tuning_problem(profile, args)?;
    let oracle_energy = problem.oracle_energy_mj.expect("set above");
    let n_space = problem.search_space().len();
    let n_near = problem.near_optimal_set(oracle_energy).len();
    let (mean, stddev) = cbo::rs_expected_trials(n_near, n_space)?;
    let seeds: Vec<u64> = (0..args.n_seeds as u64).map(|i| args.seed.wrapping_add(i)).collect();
    let settings = |s: u64| CboSettings { xi: args.xi, ..CboSettings::with_seed(s) };

    let cbo_reports = if args.method.runs_cbo() { per_seed(&seeds, |s| Ok(cbo::tune(&problem, &settings(s))?))? } else { Vec::new() };
    let rs_reports =
        if args.method.runs_rs() { per_seed(&seeds, |s| Ok(cbo::random_search(&problem, &settings(s))?))? } else { Vec::new() };

    let summary = TuneSummary {
        profile: profile.name.clone(),
        workload: profile.workload.name.clone(),
        benchmark: if args.slo_ms.is_none() { Some(args.benchmark) } else { None },
        slo_ms: problem.slo_ms,
        max_evals: args.max_evals,
        xi: args.xi,
        near_optimal_tolerance: problem.near_optimal_tolerance,
        seeds,
        n_search_space: n_space,
        n_near_optimal: n_near,
        oracle_energy_mj: oracle_energy,
        random_search_analytic: TrialMoments { mean, stddev },
        cbo: args.method.runs_cbo().then(|| MethodSummary::of(&cbo_reports, args.max_evals)),
        rs: args.method.runs_rs().then(|| MethodSummary::of(&rs_reports, args.max_evals)),
    };
    Ok((summary, cbo_reports, rs_reports))
}

pub fn tune(profile: &DeviceProfile, args: &TuneArgs) -> AppResult<Output> {
    let (summary, cbo_reports, rs_reports) = run_tuning(profile, args)?;
    let mut out = Output::default();
    for (tag, reports) in [("cbo", &cbo_reports), ("rs", &rs_reports)] {
        for (seed, r) in summary.seeds.iter().zip(reports.iter()) {
            out.file(format!("trace_{tag}_seed{seed}.csv"), formats::tuning_trace_csv(&r.evaluations));
            out.file(format!("report_{tag}_seed{seed}.json"), formats::json(r));
        }
    }
    out.file("summary.json", formats::json(&summary));
    out.line(format!("slo {:.2} ms, {} of {} configurations near-optimal", summary.slo_ms, summary.n_near_optimal, summary.n_search_space));
    out.line(format!(
        "random search, analytic: mean {:.2}, stddev {:.2}",
        summary.random_search_analytic.mean, summary.random_search_analytic.stddev
    ));
    for (tag, m) in [("cbo", &summary.cbo), ("rs", &summary.rs)] {
        if let Some(m) = m {
            out.line(format!(
                "{tag}: median {} evals, stddev {:.2}, {} misses over {} seeds",
                m.median,
                m.stddev,
                m.misses,
                summary.seeds.len()
            ));
        }
    }
    Ok(out)
}

pub fn expected_trials(n_near: usize, n_grid: usize) -> AppResult<Output> {
    let (mean, sd) = cbo::rs_expected_trials(n_near, n_grid)?;
    let mut out = Output::default();
    out.line(format!("({mean:.1}, {sd:.2})"));
    Ok(out)
}

// ---------------------------------------------------------------- perf model

#[derive(Debug, Clone, PartialEq)]
pub struct FitPerfArgs {
    pub config: ConfigChoice,
    pub slo_ms: f64,
    pub batch: Option<u32>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub layers: Option<PathBuf>,
    pub check_kkt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkTotals {
    pub n_layers: usize,
    pub gflop: f64,
    pub arithmetic_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub profile: String,
    pub workload: String,
    pub config: HardwareConfig,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub coefficients: PerfModelCoeffs,
    pub train_median_rel_error: f64,
    pub heldout_median_rel_error: Option<f64>,
    pub kkt_holds: bool,
    pub layers: Option<NetworkTotals>,
}

/// Relative tolerance of the stationarity check on fitted coefficients.
pub const KKT_REL_TOL: f64 = 1e-8;

pub fn fit_perf_model(profile: &DeviceProfile, config: &HardwareConfig, n_train: usize, n_test: usize, seed: u64) -> AppResult<FitReport> {
    if n_train < 6 {
        return Err(AppError::Usage(format!("need at least 6 training samples, got {n_train}")));
    }
    profile.validate_config(config)?;
    let (rows, lat) = perf::collect_training_samples(profile, config, n_train + n_test, &mut stream(seed, "perf"))?;
    let (train_rows, test_rows) = rows.split_at(n_train);
    let (train_lat, test_lat) = lat.split_at(n_train);
    let coeffs = perf::nnls_fit(train_rows, train_lat)?;
    let a = perf::design_matrix(train_rows);
    Ok(FitReport {
        profile: profile.name.clone(),
        workload: profile.workload.name.clone(),
        config: *config,
        seed,
        n_train,
        n_test,
        coefficients: coeffs,
        train_median_rel_error: perf::median_relative_error(&coeffs, train_rows, train_lat),
        heldout_median_rel_error: (n_test > 0).then(|| perf::median_relative_error(&coeffs, test_rows, test_lat)),
        kkt_holds: perf::kkt_holds(&a, train_lat, &coeffs.theta, KKT_REL_TOL),
        layers: None,
    })
}

fn load_layers(path: &Path) -> AppResult<(Vec<ConvLayerShape>, NetworkTotals)> {
    let layers = formats::parse_layers(&formats::read_text(path)?, &path.display().to_string())?;
    let (gflop, ai) = perf::network_totals(&layers)?;
    let totals = NetworkTotals { n_layers: layers.len(), gflop, arithmetic_intensity: ai };
    Ok((layers, totals))
}

pub fn fit_perf(profile: &DeviceProfile, args: &FitPerfArgs) -> AppResult<Output> {
    let totals = args.layers.as_deref().map(load_layers).transpose()?.map(|(_, t)| t);
    let config = serving_config(profile, args.config, args.slo_ms, args.batch)?;
    let mut report = fit_perf_model(profile, &config, args.n_train, args.n_test, args.seed)?;
    report.layers = totals;
    if args.check_kkt && !report.kkt_holds {
        return Err(AppError::Data("KKT check: fail".into()));
    }
    let mut out = Output::default();
    out.file("coeffs.json", formats::json(&report.coefficients));
    out.file("fit_report.json", formats::json(&report));
    out.line(format!("config: {}", cbo::describe(&config)));
    out.line(format!("coefficients: {:?}", report.coefficients.theta));
    out.line(format!("train median relative error: {:.2}%", 100.0 * report.train_median_rel_error));
    if let Some(e) = report.heldout_median_rel_error {
        out.line(format!("held-out median relative error: {:.2}%", 100.0 * e));
    }
    if let Some(t) = totals {
        out.line(format!("layers: {} convolutions, {:.4} GFLOP, arithmetic intensity {:.3}", t.n_layers, t.gflop, t.arithmetic_intensity));
    }
    if args.check_kkt {
        out.line("KKT check: pass");
    }
    Ok(out)
}

// ---------------------------------------------------------------- scheduling

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Greedy,
    Adaptive,
    /// Inference only.
    Baseline,
}

impl PolicyChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyChoice::Greedy => "greedy",
            PolicyChoice::Adaptive => "adaptive",
            PolicyChoice::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalChoice {
    Uniform {
        rate_per_s: f64,
    },
    Poisson {
        rate_per_s: f64,
    },
    /// A trace file, or the shipped sample when `path` is `None`.
    Trace {
        path: Option<PathBuf>,
        rate_per_s: Option<f64>,
        burst_window_s: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub policy: PolicyChoice,
    pub arrivals: ArrivalChoice,
    /// Defaults to 30 s for synthetic arrivals and to the trace length for
    /// traces.
    pub duration_s: Option<f64>,
    pub slo_ms: f64,
    pub slo_schedule: Option<SloSchedule>,
    pub config: ConfigChoice,
    pub batch: Option<u32>,
    pub ft_batch: u32,
    pub ft_iterations: u32,
    pub ft_output_dim: u32,
    pub coeffs: Option<PathBuf>,
    pub compare_default: bool,
    pub seed: u64,
}

/// Parses `start:slo,start:slo,...` (seconds and milliseconds).
pub fn parse_slo_schedule(s: &str) -> Result<SloSchedule, String> {
    let mut entries = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (t, v) = part.split_once(':').ok_or_else(|| format!("expected start:slo, got {part:?}"))?;
        let t: f64 = t.trim().parse().map_err(|_| format!("bad start time {t:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("bad slo {v:?}"))?;
        entries.push((t, v));
    }
    SloSchedule::new(entries).map_err(|e| e.to_string())
}

fn arrival_stream(choice: &ArrivalChoice, duration_s: Option<f64>, seed: u64) -> AppResult<(ArrivalStream, f64)> {
    let synthetic_duration = || {
        let d = duration_s.unwrap_or(30.0);
        if d >= 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(AppError::Usage(format!("duration must be finite and >= 0, got {d}")))
        }
    };
    match choice {
        ArrivalChoice::Uniform { rate_per_s } => {
            positive("rate", *rate_per_s)?;
            let d = synthetic_duration()?;
            Ok((workload::uniform_stream(*rate_per_s, d)?, d))
        }
        ArrivalChoice::Poisson { rate_per_s } => {
            positive("rate", *rate_per_s)?;
            let d = synthetic_duration()?;
            Ok((workload::poisson_stream(*rate_per_s, d, &mut stream(seed, "arrivals"))?, d))
        }
        ArrivalChoice::Trace { path, rate_per_s, burst_window_s } => {
            if let Some(r) = rate_per_s {
                positive("trace rate", *r)?;
            }
            if let Some(w) = burst_window_s {
                positive("burst window", *w)?;
            }
            if duration_s.is_some() {
                synthetic_duration()?;
            }
            let (text, name) = match path {
                Some(p) => (formats::read_text(p)?, p.display().to_string()),
                None => (formats::SAMPLE_TRACE.to_string(), formats::SAMPLE_TRACE_NAME.to_string()),
            };
            let mut s = formats::parse_trace(&text, &name, *rate_per_s)?;
            if let Some(w) = burst_window_s {
                s = workload::burstiest_segment(&s, *w)?;
            }
            let d = duration_s.unwrap_or_else(|| match (burst_window_s, s.last()) {
                (Some(w), _) => *w,
                (None, last) => last.unwrap_or(0.0),
            });
            Ok((s, d))
        }
    }
}

fn read_coeffs(path: &Path) -> AppResult<PerfModelCoeffs> {
    let text = formats::read_text(path)?;
    let c: PerfModelCoeffs = serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    if c.theta.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(AppError::Data(format!("{}: coefficients must be finite and >= 0", path.display())));
    }
    Ok(c)
}

#[derive(Serialize)]
struct SimulationFile<'a> {
    profile: &'a str,
    workload: &'a str,
    policy: &'a str,
    seed: u64,
    arrivals: &'a workload::ArrivalSource,
    segment: Option<workload::Segment>,
    config: HardwareConfig,
    slo_schedule: &'a SloSchedule,
    finetune: Option<FinetuneSpec>,
    coefficients: Option<PerfModelCoeffs>,
    #[serde(flatten)]
    report: &'a ScheduleReport,
}

/// Everything `simulate` computes before formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub config: HardwareConfig,
    pub arrivals: ArrivalStream,
    pub schedule: SloSchedule,
    pub finetune: Option<FinetuneSpec>,
    pub coefficients: Option<PerfModelCoeffs>,
    pub report: ScheduleReport,
    pub comparison: Option<EnergyComparison>,
}

pub fn run_simulation(profile: &DeviceProfile, args: &SimulateArgs) -> AppResult<SimulationRun> {
    positive("slo", args.slo_ms)?;
    let schedule = args.slo_schedule.clone().unwrap_or_else(|| SloSchedule::constant(args.slo_ms));
    let config = serving_config(profile, args.config, args.slo_ms, args.batch)?;
    let (arrivals, duration) = arrival_stream(&args.arrivals, args.duration_s, args.seed)?;
    let file_coeffs = args.coeffs.as_deref().map(read_coeffs).transpose()?;

    let finetune = match args.policy {
        PolicyChoice::Baseline => None,
        _ => Some(FinetuneSpec::for_workload(profile, &config, args.ft_batch, args.ft_iterations, args.ft_output_dim)?),
    };
    let coefficients = match (args.policy, file_coeffs) {
        (PolicyChoice::Adaptive, Some(c)) => Some(c),
        (PolicyChoice::Adaptive, None) => Some(fit_perf_model(profile, &config, 30, 0, args.seed)?.coefficients),
        _ => None,
    };
    let policy = match coefficients {
        Some(coeffs) => SchedulerPolicy::Adaptive { coeffs },
        None => SchedulerPolicy::Greedy,
    };
    let report = sched::simulate_schedule(
        profile,
        &config,
        &arrivals,
        finetune.as_ref(),
        &policy,
        &schedule,
        duration,
        &mut stream(args.seed, "sched"),
    )?;
    let comparison = if args.compare_default {
        let stock = profile.default_config(config.batch_size);
        let same = |c: &HardwareConfig| {
            sched::simulate_schedule(
                profile,
                c,
                &arrivals,
                finetune.as_ref(),
                &policy,
                &schedule,
                duration,
                &mut stream(args.seed, "sched"),
            )
        };
        let stock_energy = if stock == config { report.energy_total_j } else { same(&stock)?.energy_total_j };
        Some(EnergyComparison {
            energy_tuned_j: report.energy_total_j,
            energy_default_j: stock_energy,
            savings_fraction: if stock_energy > 0.0 { 1.0 - report.energy_total_j / stock_energy } else { 0.0 },
        })
    } else {
        None
    };
    Ok(SimulationRun { config, arrivals, schedule, finetune, coefficients, report, comparison })
}

pub fn simulate(profile: &DeviceProfile, args: &SimulateArgs) -> AppResult<Output> {
    let run = run_simulation(profile, args)?;
    let r = &run.report;
    let file = SimulationFile {
        profile: &profile.name,
        workload: &profile.workload.name,
        policy: args.policy.as_str(),
        seed: args.seed,
        arrivals: &run.arrivals.source,
        segment: run.arrivals.segment,
        config: run.config,
        slo_schedule: &run.schedule,
        finetune: run.finetune,
        coefficients: run.coefficients,
        report: r,
    };
    let mut out = Output::default();
    out.file("events.csv", formats::event_csv(&r.events));
    out.file("report.json", formats::json(&file));
    if let Some(c) = &run.comparison {
        out.file("energy.json", formats::json(c));
    }
    out.line(format!("policy {} on {}", args.policy.as_str(), cbo::describe(&run.config)));
    out.line(format!(
        "requests {}: completed {}, late {}, dropped {}, violation rate {:.2}%",
        r.n_requests,
        r.n_completed,
        r.n_violations,
        r.n_dropped,
        100.0 * r.violation_rate
    ));
    if r.ft_iterations_total > 0 {
        out.line(format!("fine-tuning iterations: {} of {}", r.ft_iterations_completed, r.ft_iterations_total));
    }
    out.line(format!("energy: {:.3} J over {:.3} s", r.energy_total_j, r.horizon_s));
    if let Some(c) = &run.comparison {
        out.line(format!("savings vs all-max clocks: {:.1}%", 100.0 * c.savings_fraction));
    }
    Ok(out)
}
