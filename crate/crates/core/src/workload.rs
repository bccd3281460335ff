//! Request arrival processes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArrivalSource {
    Uniform { rate_per_s: f64 },
    Poisson { rate_per_s: f64 },
    Trace { name: String },
}

/// Window cut out of a longer stream by [`burstiest_segment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalStream {
    timestamps_s: Vec<f64>,
    pub source: ArrivalSource,
    pub segment: Option<Segment>,
}

impl ArrivalStream {
    /// Validates that timestamps are finite, non-negative and sorted.
    pub fn new(timestamps_s: Vec<f64>, source: ArrivalSource) -> Result<Self> {
        if let Some(i) = timestamps_s.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidData(format!("arrival {i} is negative or not finite")));
        }
        if let Some(i) = timestamps_s.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidData(format!("arrivals not sorted at index {}", i + 1)));
        }
        Ok(ArrivalStream { timestamps_s, source, segment: None })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps_s
    }

    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.timestamps_s.last().copied()
    }

    /// One timestamp per line, the format read by [`parse_trace`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.timestamps_s {
            let _ = writeln!(s, "{t}");
        }
        s
    }
}

fn check_rate(rate_per_s: f64) -> Result<()> {
    if !(rate_per_s > 0.0 && rate_per_s.is_finite()) {
        return Err(Error::InvalidArgument("rate must be > 0".into()));
    }
    Ok(())
}

/// Arrivals at `k / rate` for `k = 1, 2, …` up to `duration_s` inclusive.
pub fn uniform_stream(rate_per_s: f64, duration_s: f64) -> Result<ArrivalStream> {
    check_rate(rate_per_s)?;
    let mut ts = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 / rate_per_s;
        // tolerate rounding at the endpoint, e.g. 240 / 8 vs 30
        if t > duration_s * (1.0 + 1e-12) {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ArrivalStream::new(ts, ArrivalSource::Uniform { rate_per_s })
}

/// Exponential inter-arrival times with mean `1 / rate`, truncated at
/// `duration_s`.
pub fn poisson_stream<R: Rng + ?Sized>(rate_per_s: f64, duration_s: f64, rng: &mut R) -> Result<ArrivalStream> {
    check_rate(rate_per_s)?;
    let exp = Exp::new(rate_per_s).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    let mut ts = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > duration_s {
            break;
        }
        ts.push(t);
    }
    ArrivalStream::new(ts, ArrivalSource::Poisson { rate_per_s })
}

/// Parses a trace: one timestamp in seconds per line (commas and extra
/// whitespace also separate values; blank lines and `#` comments are
/// skipped). With `target_rate_per_s`, time is scaled so that
/// `count / last_timestamp` equals the target.
pub fn parse_trace(text: &str, name: &str, target_rate_per_s: Option<f64>) -> Result<ArrivalStream> {
    let mut ts: Vec<f64> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| Error::Parse { line: lineno + 1, message: format!("not a number: {tok:?}") })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parse { line: lineno + 1, message: format!("timestamp must be finite and >= 0: {tok}") });
            }
            if ts.last().is_some_and(|p| v < *p) {
                return Err(Error::Parse { line: lineno + 1, message: "timestamps must be non-decreasing".into() });
            }
            ts.push(v);
        }
    }
    if let Some(target) = target_rate_per_s {
        check_rate(target)?;
        if let Some(&last) = ts.last() {
            if last > 0.0 {
                let factor = (ts.len() as f64 / last) / target;
                for t in &mut ts {
                    *t *= factor;
                }
            }
        }
    }
    ArrivalStream::new(ts, ArrivalSource::Trace { name: name.into() })
}

/// Population variance of per-second arrival counts inside
/// `[start, start + window)`.
pub fn window_count_variance(ts: &[f64], start: f64, window_s: f64) -> f64 {
    let bins = libm::ceil(window_s).max(1.0) as usize;
    let mut counts = alloc::vec![0.0f64; bins];
    for &t in ts.iter().filter(|t| **t >= start && **t < start + window_s) {
        let b = ((t - start) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let m = counts.iter().sum::<f64>() / bins as f64;
    counts.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / bins as f64
}

/// The full window (of consecutive windows starting at 0) whose
/// per-second count variance is highest, shifted to start at 0. Ties go to
/// the earliest window. A partial trailing window is not a candidate. A
/// stream no longer than one window is returned whole.
pub fn burstiest_segment(stream: &ArrivalStream, window_s: f64) -> Result<ArrivalStream> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::InvalidArgument("window must be > 0".into()));
    }
    let ts = stream.timestamps();
    let horizon = stream.last().unwrap_or(0.0);
    if horizon <= window_s {
        return Ok(stream.clone());
    }
    let n_windows = libm::floor(horizon / window_s) as usize;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..n_windows {
        let v = window_count_variance(ts, k as f64 * window_s, window_s);
        if v > best.1 {
            best = (k, v);
        }
    }
    let start = best.0 as f64 * window_s;
    let seg: Vec<f64> = ts.iter().filter(|t| **t >= start && **t < start + window_s).map(|t| t - start).collect();
    let mut out = ArrivalStream::new(seg, stream.source.clone())?;
    out.segment = Some(Segment { start_s: start, window_s });
    Ok(out)
}
