//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgetune_core::cbo::Benchmark;
use edgetune_core::sched::SloSchedule;

use crate::error::{AppError, AppResult};
use crate::experiments::{self, ArrivalChoice, ConfigChoice, MethodChoice, Output, PolicyChoice};
use crate::profiles;

#[derive(Debug, Parser)]
#[command(name = "edgetune", version, about = "Energy-aware configuration tuning and scheduling experiments on a simulated edge device")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Profile file, or the name of a profile in $EDGETUNE_PROFILE_DIR or
    /// a built-in profile (synthetic-orin, synthetic-tx2).
    #[arg(long, default_value = "synthetic-orin")]
    pub profile: String,
    /// Swap in one of the profile's named workloads.
    #[arg(long)]
    pub workload: Option<String>,
    /// Root of every random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure every grid configuration; write pareto.csv and oracle.json.
    GridSearch {
        #[command(flatten)]
        common: Common,
        /// Latency bound for the oracle; unbounded when omitted.
        #[arg(long)]
        slo_ms: Option<f64>,
        /// Measurements averaged per configuration.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Restrict the grid to one batch size.
        #[arg(long)]
        batch: Option<u32>,
        /// Report mean latency and energy without measurement noise.
        #[arg(long)]
        noiseless: bool,
    },
    /// Compare constrained Bayesian optimization with random search.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = BenchmarkArg::Relaxed)]
        benchmark: BenchmarkArg,
        /// Explicit SLO instead of the benchmark's.
        #[arg(long)]
        slo_ms: Option<f64>,
        #[arg(long, default_value_t = 30)]
        max_evals: usize,
        /// Number of seeds, counting up from --seed.
        #[arg(long, default_value_t = 20)]
        n_seeds: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        /// Exploration margin of expected improvement.
        #[arg(long, default_value_t = 0.1)]
        xi: f64,
        /// With --grid: print the analytic random-search moments and exit.
        #[arg(long, requires = "grid")]
        near: Option<usize>,
        #[arg(long, requires = "near")]
        grid: Option<usize>,
    },
    /// Fit the interference model; write coeffs.json and fit_report.json.
    FitPerf {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ConfigArg::Tuned)]
        config: ConfigArg,
        /// SLO that the tuned configuration is chosen for.
        #[arg(long, default_value_t = 700.0)]
        slo_ms: f64,
        #[arg(long)]
        batch: Option<u32>,
        #[arg(long, default_value_t = 30)]
        n_train: usize,
        #[arg(long, default_value_t = 30)]
        n_test: usize,
        /// Layer list (CSV n,c,h,w,k,p,q,r,s) whose totals are reported.
        #[arg(long)]
        layers: Option<PathBuf>,
        /// Re-verify optimality of the fit and print the result.
        #[arg(long)]
        check_kkt: bool,
    },
    /// Run the serving simulation; write events.csv and report.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PolicyArg::Adaptive)]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value_t = ArrivalArg::Poisson)]
        arrivals: ArrivalArg,
        /// Requests per second of synthetic arrivals, or the rate a trace is
        /// rescaled to.
        #[arg(long)]
        rate: Option<f64>,
        /// Trace file; the shipped bursty sample when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Replay only the burstiest window of this many seconds.
        #[arg(long)]
        burst_window: Option<f64>,
        /// Seconds; 30 for synthetic arrivals, the trace length otherwise.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 700.0)]
        slo_ms: f64,
        /// Time-varying SLO as start_s:slo_ms pairs, e.g. 0:250,30:700.
        #[arg(long, value_parser = experiments::parse_slo_schedule)]
        slo_schedule: Option<SloSchedule>,
        #[arg(long, value_enum, default_value_t = ConfigArg::Tuned)]
        config: ConfigArg,
        #[arg(long)]
        batch: Option<u32>,
        #[arg(long, default_value_t = 64)]
        ft_batch: u32,
        #[arg(long, default_value_t = 10)]
        ft_iters: u32,
        #[arg(long, default_value_t = 1000)]
        ft_output_dim: u32,
        /// Interference coefficients (coeffs.json); fitted on the fly when
        /// omitted.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        /// Also run all-max clocks and write energy.json.
        #[arg(long)]
        compare_default: bool,
    },
    /// Mean and standard deviation of random-search trials to hit one of
    /// `near` good configurations among `grid`.
    ExpectedTrials {
        #[arg(long)]
        near: usize,
        #[arg(long)]
        grid: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchmarkArg {
    Tight,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cbo,
    Rs,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConfigArg {
    Tuned,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Greedy,
    Adaptive,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArrivalArg {
    Uniform,
    Poisson,
    Trace,
}

impl From<ConfigArg> for ConfigChoice {
    fn from(c: ConfigArg) -> Self {
        match c {
            ConfigArg::Tuned => ConfigChoice::Tuned,
            ConfigArg::Max => ConfigChoice::Max,
        }
    }
}

fn load(common: &Common) -> AppResult<edgetune_core::device::DeviceProfile> {
    profiles::load(&common.profile, common.workload.as_deref())
}

/// Runs a parsed command and returns its output directory and results.
pub fn execute(cmd: &Command) -> AppResult<(Option<PathBuf>, Output)> {
    match cmd {
        Command::GridSearch { common, slo_ms, replicas, batch, noiseless } => {
            let p = load(common)?;
            let args = experiments::GridSearchArgs {
                slo_ms: *slo_ms,
                replicas: *replicas,
                batch: *batch,
                noiseless: *noiseless,
                seed: common.seed,
            };
            Ok((Some(common.out.clone()), experiments::grid_search(&p, &args)?))
        }
        Command::Tune { common, benchmark, slo_ms, max_evals, n_seeds, method, xi, near, grid } => {
            if let (Some(n), Some(g)) = (near, grid) {
                if *method != MethodArg::Rs {
                    return Err(AppError::Usage("--near/--grid only apply to --method rs".into()));
                }
                return Ok((None, experiments::expected_trials(*n, *g)?));
            }
            let p = load(common)?;
            let args = experiments::TuneArgs {
                benchmark: match benchmark {
                    BenchmarkArg::Tight => Benchmark::Tight,
                    BenchmarkArg::Relaxed => Benchmark::Relaxed,
                },
                slo_ms: *slo_ms,
                max_evals: *max_evals,
                seed: common.seed,
                n_seeds: *n_seeds,
                method: match method {
                    MethodArg::Cbo => MethodChoice::Cbo,
                    MethodArg::Rs => MethodChoice::Rs,
                    MethodArg::Both => MethodChoice::Both,
                },
                xi: *xi,
            };
            Ok((Some(common.out.clone()), experiments::tune(&p, &args)?))
        }
        Command::FitPerf { common, config, slo_ms, batch, n_train, n_test, layers, check_kkt } => {
            if let Some(path) = layers {
                if !path.is_file() {
                    return Err(AppError::Usage(format!("layer file {} does not exist", path.display())));
                }
            }
            let p = load(common)?;
            let args = experiments::FitPerfArgs {
                config: (*config).into(),
                slo_ms: *slo_ms,
                batch: *batch,
                n_train: *n_train,
                n_test: *n_test,
                seed: common.seed,
                layers: layers.clone(),
                check_kkt: *check_kkt,
            };
            Ok((Some(common.out.clone()), experiments::fit_perf(&p, &args)?))
        }
        Command::Simulate {
            common,
            policy,
            arrivals,
            rate,
            trace,
            burst_window,
            duration,
            slo_ms,
            slo_schedule,
            config,
            batch,
            ft_batch,
            ft_iters,
            ft_output_dim,
            coeffs,
            compare_default,
        } => {
            for path in [trace, coeffs].into_iter().flatten() {
                if !path.is_file() {
                    return Err(AppError::Usage(format!("{} does not exist", path.display())));
                }
            }
            if trace.is_some() && *arrivals != ArrivalArg::Trace {
                return Err(AppError::Usage("--trace requires --arrivals trace".into()));
            }
            if burst_window.is_some() && *arrivals != ArrivalArg::Trace {
                return Err(AppError::Usage("--burst-window requires --arrivals trace".into()));
            }
            let p = load(common)?;
            let arrivals = match arrivals {
                ArrivalArg::Uniform => ArrivalChoice::Uniform { rate_per_s: rate.unwrap_or(8.0) },
                ArrivalArg::Poisson => ArrivalChoice::Poisson { rate_per_s: rate.unwrap_or(8.0) },
                ArrivalArg::Trace => ArrivalChoice::Trace { path: trace.clone(), rate_per_s: *rate, burst_window_s: *burst_window },
            };
            let args = experiments::SimulateArgs {
                policy: match policy {
                    PolicyArg::Greedy => PolicyChoice::Greedy,
                    PolicyArg::Adaptive => PolicyChoice::Adaptive,
                    PolicyArg::Baseline => PolicyChoice::Baseline,
                },
                arrivals,
                duration_s: *duration,
                slo_ms: *slo_ms,
                slo_schedule: slo_schedule.clone(),
                config: (*config).into(),
                batch: *batch,
                ft_batch: *ft_batch,
                ft_iterations: *ft_iters,
                ft_output_dim: *ft_output_dim,
                coeffs: coeffs.clone(),
                compare_default: *compare_default,
                seed: common.seed,
            };
            Ok((Some(common.out.clone()), experiments::simulate(&p, &args)?))
        }
        Command::ExpectedTrials { near, grid } => Ok((None, experiments::expected_trials(*near, *grid)?)),
    }
}

/// Parses `args`, runs the command and writes its files. Returns the
/// process exit code on failure.
pub fn main_with<I, T>(args: I) -> Result<(), u8>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(2) };
        }
    };
    let result = execute(&cli.command).and_then(|(dir, out)| {
        if let Some(dir) = dir {
            out.write_to(&dir)?;
        }
        Ok(out)
    });
    match result {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            Ok(())
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(e.exit_code() as u8)
        }
    }
}
