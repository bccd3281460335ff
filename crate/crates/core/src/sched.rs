//! Discrete-event simulation of an inference server sharing the GPU with
//! fine-tuning work.
//!
//! Requests queue FIFO and are served in batches padded to the current
//! batch size. A batch is dispatched when the queue holds a full batch or
//! when waiting longer would make the head request miss its deadline given
//! the predicted service time. Requests already past their deadline at
//! dispatch are dropped. Fine-tuning runs one iteration at a time next to
//! inference and inflates co-located batches.
//!
//! Power is piecewise constant between events and integrated exactly.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceProfile, HardwareConfig};
use crate::perf::{self, PerfModelCoeffs, WorkloadFeatures};
use crate::rng::stream;
use crate::workload::ArrivalStream;
use crate::{Error, Result};

/// Cost of one knob-file write.
pub const RECONFIG_MS_PER_KNOB: f64 = 17.0;
/// Upper bound on one reconfiguration.
pub const RECONFIG_MS_MAX: f64 = 150.0;
/// Service-time predictions are padded by `exp(k·σ)` to absorb latency noise.
pub const SERVICE_MARGIN_SIGMAS: f64 = 3.0;

pub fn reconfiguration_ms(knobs_changed: usize) -> f64 {
    (RECONFIG_MS_PER_KNOB * knobs_changed as f64).min(RECONFIG_MS_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSpec {
    pub batch_size: u32,
    pub n_iterations: u32,
    pub output_dim: u32,
    /// GFLOP per iteration.
    pub flops_per_iter: f64,
    /// FLOP/byte of one iteration.
    pub ai: f64,
    pub iter_duration_ms_standalone: f64,
}

impl FinetuneSpec {
    /// A spec with no work at all; co-locating it changes nothing.
    pub fn zero() -> Self {
        FinetuneSpec { batch_size: 0, n_iterations: 0, output_dim: 0, flops_per_iter: 0.0, ai: 0.0, iter_duration_ms_standalone: 0.0 }
    }

    /// Fine-tuning the head of the profile's workload: a forward pass over
    /// the whole network plus backward and update through a dense head.
    /// The iteration time is the roofline time at `config`'s maximum GPU
    /// clock and memory clock.
    pub fn for_workload(
        profile: &DeviceProfile,
        config: &HardwareConfig,
        batch_size: u32,
        n_iterations: u32,
        output_dim: u32,
    ) -> Result<Self> {
        if batch_size == 0 || n_iterations == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("fine-tune batch, iterations and output dim must be >= 1".into()));
        }
        let w = &profile.workload;
        let b = f64::from(batch_size);
        let flops = b * (w.flops_per_query + 2.0 * perf::head_flops_gflop(output_dim));
        let bytes = 2.0 * b * w.bytes_per_query + 3.0 * perf::head_bytes_gb(output_dim);
        let t_flop = flops / (profile.compute_throughput_coeff * config.gpu_max_freq);
        let t_mem = bytes / (profile.mem_bandwidth_coeff * config.mem_freq);
        Ok(FinetuneSpec {
            batch_size,
            n_iterations,
            output_dim,
            flops_per_iter: flops,
            ai: flops / bytes,
            iter_duration_ms_standalone: t_flop.max(t_mem) * 1000.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_iterations == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("fine-tune integers must be >= 1".into()));
        }
        for (name, v) in
            [("flops_per_iter", self.flops_per_iter), ("ai", self.ai), ("iter_duration_ms_standalone", self.iter_duration_ms_standalone)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("fine-tune {name} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerPolicy {
    /// Run fine-tuning iterations back to back from the start.
    Greedy,
    /// Start an iteration only if some batch size keeps the predicted
    /// worst-case latency within the SLO.
    Adaptive { coeffs: PerfModelCoeffs },
}

/// Piecewise-constant SLO: each entry applies from its start time until
/// the next entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloSchedule {
    entries: Vec<(f64, f64)>,
}

impl SloSchedule {
    pub fn constant(slo_ms: f64) -> Self {
        SloSchedule { entries: alloc::vec![(0.0, slo_ms)] }
    }

    /// `(start_s, slo_ms)` pairs; must be non-empty with strictly increasing
    /// starts. The first entry applies from t = 0 regardless of its start.
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("SLO schedule must not be empty".into()));
        }
        if entries.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument("SLO schedule starts must increase".into()));
        }
        if entries.iter().any(|(t, s)| !(t.is_finite() && *t >= 0.0) || !(*s > 0.0)) {
            return Err(Error::InvalidArgument("SLO schedule needs finite starts >= 0 and SLOs > 0".into()));
        }
        Ok(SloSchedule { entries })
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn at(&self, t: f64) -> f64 {
        let mut slo = self.entries[0].1;
        for &(start, s) in &self.entries[1..] {
            if t >= start {
                slo = s;
            }
        }
        slo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    Drop,
    BatchStart,
    BatchEnd,
    Complete,
    FtStart,
    FtEnd,
    FtDefer,
    Reconfigure,
    SloChange,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Drop => "drop",
            EventKind::BatchStart => "batch_start",
            EventKind::BatchEnd => "batch_end",
            EventKind::Complete => "complete",
            EventKind::FtStart => "ft_start",
            EventKind::FtEnd => "ft_end",
            EventKind::FtDefer => "ft_defer",
            EventKind::Reconfigure => "reconfigure",
            EventKind::SloChange => "slo_change",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub time_s: f64,
    pub event: EventKind,
    pub request_id: Option<u64>,
    pub batch: Option<u32>,
    pub latency_ms: Option<f64>,
    pub energy_mj: Option<f64>,
    pub slo_ms: f64,
    pub ft_iter: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub id: u64,
    pub arrival_time_s: f64,
    pub deadline_s: f64,
    pub completion_time_s: Option<f64>,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub n_requests: usize,
    pub n_completed: usize,
    pub n_violations: usize,
    pub n_dropped: usize,
    pub violation_rate: f64,
    pub ft_iterations_completed: u32,
    pub ft_iterations_total: u32,
    pub ft_iteration_starts_s: Vec<f64>,
    pub ft_iteration_ends_s: Vec<f64>,
    /// Completion time of the last fine-tuning iteration, if all finished.
    pub ft_makespan_s: Option<f64>,
    pub energy_total_j: f64,
    pub horizon_s: f64,
    pub mean_latency_ms: Option<f64>,
    pub requests: Vec<InferenceRequest>,
    pub events: Vec<ScheduleEvent>,
    pub power_trace: Vec<PowerSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Arrival(usize),
    BatchDone,
    ReconfigDone,
    FtIterDone,
    SloChange(usize),
    Wake,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Queued {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl Eq for Queued {}

impl Ord for Queued {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Server {
    Idle,
    Batch { members: Vec<usize>, power_w: f64, start: f64, latency_ms: f64, energy_mj: f64, batch: u32 },
    Reconfig,
}

struct Sim<'a, R: Rng + ?Sized> {
    profile: &'a DeviceProfile,
    config: HardwareConfig,
    ft: Option<&'a FinetuneSpec>,
    policy: &'a SchedulerPolicy,
    slo: &'a SloSchedule,
    slo_now: f64,
    rng: &'a mut R,
    heap: BinaryHeap<Queued>,
    seq: u64,
    now: f64,
    requests: Vec<InferenceRequest>,
    queue: VecDeque<usize>,
    server: Server,
    cur_batch: u32,
    pending_batch: Option<u32>,
    ft_active: bool,
    ft_done: u32,
    ft_deferred: bool,
    ft_starts: Vec<f64>,
    ft_ends: Vec<f64>,
    next_wake: Option<f64>,
    events: Vec<ScheduleEvent>,
    power_w: f64,
    last_t: f64,
    energy_j: f64,
    trace: Vec<PowerSegment>,
}

impl<R: Rng + ?Sized> Sim<'_, R> {
    fn push(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Queued { time, seq: self.seq, ev });
    }

    fn log(
        &mut self,
        event: EventKind,
        request_id: Option<u64>,
        batch: Option<u32>,
        latency_ms: Option<f64>,
        energy_mj: Option<f64>,
        ft_iter: Option<u32>,
    ) {
        self.events.push(ScheduleEvent {
            time_s: self.now,
            event,
            request_id,
            batch,
            latency_ms,
            energy_mj,
            slo_ms: self.slo_now,
            ft_iter,
        });
    }

    fn advance(&mut self, t: f64) {
        if t > self.last_t {
            self.energy_j += self.power_w * (t - self.last_t);
            match self.trace.last_mut() {
                Some(seg) if seg.power_w == self.power_w && seg.end_s == self.last_t => seg.end_s = t,
                _ => self.trace.push(PowerSegment { start_s: self.last_t, end_s: t, power_w: self.power_w }),
            }
            self.last_t = t;
        }
        self.now = t;
    }

    fn config_at(&self, batch: u32) -> HardwareConfig {
        self.config.with_batch(batch)
    }

    fn refresh_power(&mut self) {
        let p = self.profile;
        let c = self.config_at(self.cur_batch);
        let ft_power = p.static_power_w + p.gpu_power_w(c.gpu_max_freq) + p.mem_power_w(c.mem_freq);
        self.power_w = match (&self.server, self.ft_active) {
            (Server::Batch { .. }, true) => p.full_power_w(&c),
            (Server::Batch { power_w, .. }, false) => *power_w,
            (_, true) => ft_power,
            (_, false) => p.static_power_w,
        };
    }

    fn margin(&self, batch: u32) -> f64 {
        libm::exp(SERVICE_MARGIN_SIGMAS * self.profile.noise_sigma(batch))
    }

    /// Predicted (unpadded) latency of a batch at the current state.
    fn predicted_latency_ms(&self, batch: u32, with_ft: bool) -> f64 {
        match (self.policy, self.ft, with_ft) {
            (SchedulerPolicy::Adaptive { coeffs }, Some(ft), true) => {
                perf::predict(coeffs, &WorkloadFeatures::of(self.profile, batch, Some(ft)))
            }
            _ => device::stage_times(self.profile, &self.config_at(batch)).latency_ms,
        }
    }

    fn predicted_service_ms(&self, batch: u32) -> f64 {
        self.predicted_latency_ms(batch, self.ft_active) * self.margin(batch)
    }

    fn ft_remaining(&self) -> bool {
        self.ft.is_some_and(|f| self.ft_done < f.n_iterations)
    }

    fn request_batch(&mut self, b: u32) {
        if b != self.cur_batch || self.pending_batch.is_some() {
            self.pending_batch = if b == self.cur_batch { None } else { Some(b) };
        }
    }

    fn try_start_ft(&mut self) {
        if self.ft_active || !self.ft_remaining() {
            return;
        }
        let ft = self.ft.expect("checked above");
        let chosen = match self.policy {
            SchedulerPolicy::Greedy => Some(self.cur_batch),
            SchedulerPolicy::Adaptive { coeffs } => {
                let slo = self.slo_now;
                self.profile
                    .grid
                    .batch_sizes
                    .iter()
                    .rev()
                    .filter(|b| **b <= self.config.batch_size)
                    .find(|b| 2.0 * perf::predict(coeffs, &WorkloadFeatures::of(self.profile, **b, Some(ft))) <= slo)
                    .copied()
            }
        };
        match chosen {
            Some(b) => {
                self.ft_deferred = false;
                self.request_batch(b);
                self.ft_active = true;
                self.ft_starts.push(self.now);
                let iter = self.ft_done + 1;
                self.log(EventKind::FtStart, None, Some(b), None, None, Some(iter));
                self.push(self.now + ft.iter_duration_ms_standalone / 1000.0, Ev::FtIterDone);
            }
            None => {
                if !self.ft_deferred {
                    self.ft_deferred = true;
                    let iter = self.ft_done + 1;
                    self.log(EventKind::FtDefer, None, None, None, None, Some(iter));
                }
                self.request_batch(self.config.batch_size);
            }
        }
    }

    fn try_dispatch(&mut self) -> Result<()> {
        if !matches!(self.server, Server::Idle) {
            return Ok(());
        }
        if let Some(b) = self.pending_batch.take() {
            let from = self.config_at(self.cur_batch);
            let to = self.config_at(b);
            let ms = reconfiguration_ms(from.knobs_changed(&to));
            self.cur_batch = b;
            self.server = Server::Reconfig;
            self.log(EventKind::Reconfigure, None, Some(b), Some(ms), None, None);
            self.push(self.now + ms / 1000.0, Ev::ReconfigDone);
            return Ok(());
        }
        // drop expired requests at the head
        while let Some(&i) = self.queue.front() {
            if self.now > self.requests[i].deadline_s {
                self.queue.pop_front();
                self.requests[i].dropped = true;
                self.log(EventKind::Drop, Some(i as u64), None, None, None, None);
            } else {
                break;
            }
        }
        let Some(&head) = self.queue.front() else { return Ok(()) };
        let b = self.cur_batch;
        if self.queue.len() < b as usize {
            let trigger = self.requests[head].deadline_s - self.predicted_service_ms(b) / 1000.0;
            if trigger > self.now {
                if self.next_wake.is_none_or(|w| trigger < w || w <= self.now) {
                    self.next_wake = Some(trigger);
                    self.push(trigger, Ev::Wake);
                }
                return Ok(());
            }
        }
        let mut members = Vec::with_capacity(b as usize);
        while members.len() < b as usize {
            let Some(i) = self.queue.pop_front() else { break };
            if self.now > self.requests[i].deadline_s {
                self.requests[i].dropped = true;
                self.log(EventKind::Drop, Some(i as u64), None, None, None, None);
            } else {
                members.push(i);
            }
        }
        if members.is_empty() {
            return Ok(());
        }
        let c = self.config_at(b);
        let m = match (self.ft_active, self.ft) {
            (true, Some(ft)) => device::measure_concurrent(self.profile, &c, ft, self.rng)?,
            _ => device::measure(self.profile, &c, self.rng)?,
        };
        let energy_mj = m.energy_per_query_mj * f64::from(b);
        let power_w = energy_mj / m.latency_ms;
        self.log(EventKind::BatchStart, None, Some(b), Some(m.latency_ms), Some(energy_mj), None);
        self.server = Server::Batch { members, power_w, start: self.now, latency_ms: m.latency_ms, energy_mj, batch: b };
        self.push(self.now + m.latency_ms / 1000.0, Ev::BatchDone);
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<()> {
        match ev {
            Ev::Arrival(i) => {
                self.queue.push_back(i);
                self.log(EventKind::Arrival, Some(i as u64), None, None, None, None);
            }
            Ev::BatchDone => {
                let server = core::mem::replace(&mut self.server, Server::Idle);
                if let Server::Batch { members, latency_ms, energy_mj, batch, start, .. } = server {
                    let _ = start;
                    self.log(EventKind::BatchEnd, None, Some(batch), Some(latency_ms), Some(energy_mj), None);
                    for i in members {
                        self.requests[i].completion_time_s = Some(self.now);
                        let lat = (self.now - self.requests[i].arrival_time_s) * 1000.0;
                        self.log(EventKind::Complete, Some(i as u64), Some(batch), Some(lat), None, None);
                    }
                }
                if !self.ft_active {
                    self.try_start_ft();
                }
            }
            Ev::ReconfigDone => {
                self.server = Server::Idle;
            }
            Ev::FtIterDone => {
                self.ft_active = false;
                self.ft_done += 1;
                self.ft_ends.push(self.now);
                let done = self.ft_done;
                self.log(EventKind::FtEnd, None, None, None, None, Some(done));
                if self.ft_remaining() {
                    self.try_start_ft();
                } else {
                    self.request_batch(self.config.batch_size);
                }
            }
            Ev::SloChange(k) => {
                self.slo_now = self.slo.entries()[k].1;
                self.log(EventKind::SloChange, None, None, None, None, None);
                self.try_start_ft();
            }
            Ev::Wake => {
                if self.next_wake.is_some_and(|w| w <= self.now) {
                    self.next_wake = None;
                }
            }
        }
        self.try_dispatch()
    }
}

/// Runs the event loop. Arrivals after `duration_s` are ignored; the run
/// continues until every admitted request is served or dropped and no
/// fine-tuning iteration can start. Energy covers `[0, max(duration, end)]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_schedule<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    arrivals: &ArrivalStream,
    ft: Option<&FinetuneSpec>,
    policy: &SchedulerPolicy,
    slo: &SloSchedule,
    duration_s: f64,
    rng: &mut R,
) -> Result<ScheduleReport> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument("duration must be a finite value >= 0".into()));
    }
    profile.validate_config(config)?;
    if let Some(f) = ft {
        f.validate()?;
    }
    let slo0 = slo.entries()[0].1;
    let mut sim = Sim {
        profile,
        config: *config,
        ft,
        policy,
        slo,
        slo_now: slo0,
        rng,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        requests: Vec::new(),
        queue: VecDeque::new(),
        server: Server::Idle,
        cur_batch: config.batch_size,
        pending_batch: None,
        ft_active: false,
        ft_done: 0,
        ft_deferred: false,
        ft_starts: Vec::new(),
        ft_ends: Vec::new(),
        next_wake: None,
        events: Vec::new(),
        power_w: profile.static_power_w,
        last_t: 0.0,
        energy_j: 0.0,
        trace: Vec::new(),
    };
    for (k, &(start, _)) in slo.entries().iter().enumerate().skip(1) {
        sim.push(start, Ev::SloChange(k));
    }
    for (i, &t) in arrivals.timestamps().iter().filter(|t| **t <= duration_s).enumerate() {
        let s = slo.at(t);
        sim.requests.push(InferenceRequest {
            id: i as u64,
            arrival_time_s: t,
            deadline_s: t + s / 1000.0,
            completion_time_s: None,
            dropped: false,
        });
        sim.push(t, Ev::Arrival(i));
    }
    if duration_s > 0.0 || !sim.requests.is_empty() {
        sim.try_start_ft();
        sim.try_dispatch()?;
    }
    sim.refresh_power();
    while let Some(q) = sim.heap.pop() {
        sim.advance(q.time);
        sim.handle(q.ev)?;
        sim.refresh_power();
    }
    let horizon = duration_s.max(sim.now);
    sim.advance(horizon);

    let n_requests = sim.requests.len();
    let n_dropped = sim.requests.iter().filter(|r| r.dropped).count();
    let completed: Vec<&InferenceRequest> = sim.requests.iter().filter(|r| r.completion_time_s.is_some()).collect();
    let n_violations = completed.iter().filter(|r| r.completion_time_s.unwrap_or(0.0) > r.deadline_s).count();
    let mean_latency_ms = if completed.is_empty() {
        None
    } else {
        Some(
            completed.iter().map(|r| (r.completion_time_s.unwrap_or(0.0) - r.arrival_time_s) * 1000.0).sum::<f64>()
                / completed.len() as f64,
        )
    };
    let total = ft.map_or(0, |f| f.n_iterations);
    Ok(ScheduleReport {
        n_requests,
        n_completed: completed.len(),
        n_violations,
        n_dropped,
        violation_rate: if n_requests == 0 { 0.0 } else { (n_violations + n_dropped) as f64 / n_requests as f64 },
        ft_iterations_completed: sim.ft_done,
        ft_iterations_total: total,
        ft_makespan_s: if total > 0 && sim.ft_done == total { sim.ft_ends.last().copied() } else { None },
        ft_iteration_starts_s: sim.ft_starts,
        ft_iteration_ends_s: sim.ft_ends,
        energy_total_j: sim.energy_j,
        horizon_s: horizon,
        mean_latency_ms,
        requests: sim.requests,
        events: sim.events,
        power_trace: sim.trace,
    })
}

/// Constant-SLO simulation.
#[allow(clippy::too_many_arguments)]
pub fn simulate<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    arrivals: &ArrivalStream,
    ft: Option<&FinetuneSpec>,
    policy: &SchedulerPolicy,
    slo_ms: f64,
    duration_s: f64,
    rng: &mut R,
) -> Result<ScheduleReport> {
    if !(slo_ms > 0.0) {
        return Err(Error::InvalidArgument("slo_ms must be > 0".into()));
    }
    simulate_schedule(profile, config, arrivals, ft, policy, &SloSchedule::constant(slo_ms), duration_s, rng)
}

/// Inference only: the reference violation rate without fine-tuning.
pub fn baseline_simulate<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    arrivals: &ArrivalStream,
    slo_ms: f64,
    duration_s: f64,
    rng: &mut R,
) -> Result<ScheduleReport> {
    simulate(profile, config, arrivals, None, &SchedulerPolicy::Greedy, slo_ms, duration_s, rng)
}

/// Adaptive scheduling under a time-varying SLO.
#[allow(clippy::too_many_arguments)]
pub fn slo_step_scenario<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    config: &HardwareConfig,
    arrivals: &ArrivalStream,
    ft: &FinetuneSpec,
    coeffs: &PerfModelCoeffs,
    schedule: &SloSchedule,
    duration_s: f64,
    rng: &mut R,
) -> Result<ScheduleReport> {
    let policy = SchedulerPolicy::Adaptive { coeffs: *coeffs };
    simulate_schedule(profile, config, arrivals, Some(ft), &policy, schedule, duration_s, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison {
    pub energy_tuned_j: f64,
    pub energy_default_j: f64,
    /// `1 − tuned / default`.
    pub savings_fraction: f64,
}

/// Runs the same scenario at two configurations with identical streams.
#[allow(clippy::too_many_arguments)]
pub fn energy_comparison(
    profile: &DeviceProfile,
    arrivals: &ArrivalStream,
    ft: Option<&FinetuneSpec>,
    policy: &SchedulerPolicy,
    tuned: &HardwareConfig,
    default: &HardwareConfig,
    slo_ms: f64,
    duration_s: f64,
    seed: u64,
) -> Result<EnergyComparison> {
    let label = "sched/measure";
    let a = simulate(profile, tuned, arrivals, ft, policy, slo_ms, duration_s, &mut stream(seed, label))?;
    let b = simulate(profile, default, arrivals, ft, policy, slo_ms, duration_s, &mut stream(seed, label))?;
    Ok(EnergyComparison {
        energy_tuned_j: a.energy_total_j,
        energy_default_j: b.energy_total_j,
        savings_fraction: if b.energy_total_j > 0.0 { 1.0 - a.energy_total_j / b.energy_total_j } else { 0.0 },
    })
}

/// Integrates a power trace; independent of the simulator's running sum.
pub fn integrate_power(trace: &[PowerSegment]) -> f64 {
    trace.iter().map(|s| s.power_w * (s.end_s - s.start_s)).sum()
}

/// Debug label for a policy.
pub fn policy_name(p: &SchedulerPolicy) -> String {
    match p {
        SchedulerPolicy::Greedy => "greedy".into(),
        SchedulerPolicy::Adaptive { .. } => "adaptive".into(),
    }
}
