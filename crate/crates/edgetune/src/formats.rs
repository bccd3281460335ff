//! On-disk formats. Column names and JSON keys are part of the public
//! interface; see the README for the full list.

use edgetune_core::cbo::Observation;
use edgetune_core::device::ParetoPoint;
use edgetune_core::perf::ConvLayerShape;
use edgetune_core::sched::ScheduleEvent;
use edgetune_core::workload::{self, ArrivalStream};
use serde::Serialize;

use crate::error::{AppError, AppResult};

pub const PARETO_HEADER: [&str; 7] = ["latency_ms", "energy_mj", "cpu", "gpu_min", "gpu_max", "mem", "batch"];
pub const TRACE_HEADER: [&str; 9] = ["iter", "cpu", "gpu_min", "gpu_max", "mem", "batch", "latency_ms", "energy_mj", "feasible"];
pub const EVENT_HEADER: [&str; 8] = ["time_s", "event", "request_id", "batch", "latency_ms", "energy_mj", "slo_ms", "ft_iter"];
pub const LAYER_HEADER: [&str; 9] = ["n", "c", "h", "w", "k", "p", "q", "r", "s"];

/// Shipped sample trace: a Markov-modulated arrival process with quiet
/// stretches and short bursts, one timestamp per line.
pub const SAMPLE_TRACE: &str = include_str!("../data/bursty-sample.txt");
pub const SAMPLE_TRACE_NAME: &str = "bursty-sample";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

fn writer<const N: usize>(header: [&str; N]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    w
}

pub fn pareto_csv(points: &[ParetoPoint]) -> Vec<u8> {
    let mut w = writer(PARETO_HEADER);
    for p in points {
        let c = &p.config;
        w.write_record([
            p.latency_ms.to_string(),
            p.energy_mj.to_string(),
            c.cpu_freq.to_string(),
            c.gpu_min_freq.to_string(),
            c.gpu_max_freq.to_string(),
            c.mem_freq.to_string(),
            c.batch_size.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn tuning_trace_csv(evaluations: &[Observation]) -> Vec<u8> {
    let mut w = writer(TRACE_HEADER);
    for (i, o) in evaluations.iter().enumerate() {
        let c = &o.config;
        w.write_record([
            (i + 1).to_string(),
            c.cpu_freq.to_string(),
            c.gpu_min_freq.to_string(),
            c.gpu_max_freq.to_string(),
            c.mem_freq.to_string(),
            c.batch_size.to_string(),
            o.latency_ms.to_string(),
            o.energy_mj.to_string(),
            o.feasible.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn event_csv(events: &[ScheduleEvent]) -> Vec<u8> {
    let mut w = writer(EVENT_HEADER);
    for e in events {
        w.write_record([
            e.time_s.to_string(),
            e.event.as_str().to_string(),
            opt(e.request_id),
            opt(e.batch),
            opt(e.latency_ms),
            opt(e.energy_mj),
            e.slo_ms.to_string(),
            opt(e.ft_iter),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

/// Reads a layer list. A header row naming the nine dimensions is optional.
pub fn parse_layers(text: &str, origin: &str) -> AppResult<Vec<ConvLayerShape>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::Data(format!("{origin}: {e}")))?;
        if i == 0 && rec.iter().eq(LAYER_HEADER) {
            continue;
        }
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() != 9 {
            return Err(AppError::Data(format!("{origin}: line {line}: expected 9 fields, found {}", rec.len())));
        }
        let mut v = [0u64; 9];
        for (slot, field) in v.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|_| AppError::Data(format!("{origin}: line {line}: not a dimension: {field:?}")))?;
        }
        let [n, c, h, w, k, p, q, r, s] = v;
        let shape = ConvLayerShape { n, c, h, w, k, p, q, r, s };
        shape.validate().map_err(|e| AppError::Data(format!("{origin}: line {line}: {e}")))?;
        out.push(shape);
    }
    if out.is_empty() {
        return Err(AppError::Data(format!("{origin}: no layers")));
    }
    Ok(out)
}

pub fn read_text(path: &std::path::Path) -> AppResult<String> {
    std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub fn parse_trace(text: &str, name: &str, target_rate_per_s: Option<f64>) -> AppResult<ArrivalStream> {
    workload::parse_trace(text, name, target_rate_per_s).map_err(|e| AppError::Data(format!("{name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgetune_core::sched::EventKind;

    #[test]
    fn layers_with_and_without_header() {
        let a = parse_layers("n,c,h,w,k,p,q,r,s\n1,3,224,224,32,112,112,3,3\n", "a").unwrap();
        let b = parse_layers("# stem\n 1, 3, 224, 224, 32, 112, 112, 3, 3\n", "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].k, 32);
    }

    #[test]
    fn bad_layers_are_rejected() {
        assert!(parse_layers("", "e").is_err());
        assert!(parse_layers("1,1,1,1,1,1,1,1\n", "short").is_err());
        assert!(parse_layers("1,1,1,1,1,1,1,1,x\n", "nan").is_err());
        assert!(parse_layers("1,1,1,1,0,1,1,1,1\n", "zero").is_err());
    }

    #[test]
    fn missing_event_fields_are_empty() {
        let e = ScheduleEvent {
            time_s: 1.5,
            event: EventKind::SloChange,
            request_id: None,
            batch: None,
            latency_ms: None,
            energy_mj: None,
            slo_ms: 700.0,
            ft_iter: None,
        };
        let text = String::from_utf8(event_csv(&[e])).unwrap();
        assert_eq!(text.lines().nth(1), Some("1.5,slo_change,,,,,700,"));
    }

    #[test]
    fn sample_trace_parses() {
        let s = parse_trace(SAMPLE_TRACE, SAMPLE_TRACE_NAME, None).unwrap();
        assert!(s.len() > 1000);
    }
}
