//! The `analyze` subcommand: tables and plot data from exported results.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use clap::ValueEnum;
use ivnsim_core::metrics::analysis::{jitter, utilized_bandwidth, LatencyStats};
use ivnsim_core::metrics::export::load_results;
use ivnsim_core::{MetricStore, SimTime};

use crate::{table, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Latency,
    Jitter,
    Bandwidth,
    Queues,
    /// AVB credit trajectories.
    Credit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub table: String,
    /// Plot-ready CSV.
    pub plot: String,
    pub rows: usize,
}

/// Glob match when the pattern has `*` or `?`, substring match otherwise.
pub fn matches(pattern: Option<&str>, name: &str) -> bool {
    let Some(p) = pattern else { return true };
    if !p.contains(['*', '?']) {
        return name.contains(p);
    }
    fn glob(p: &[u8], s: &[u8]) -> bool {
        match (p.first(), s.first()) {
            (None, None) => true,
            (Some(b'*'), _) => glob(&p[1..], s) || (!s.is_empty() && glob(p, &s[1..])),
            (Some(b'?'), Some(_)) => glob(&p[1..], &s[1..]),
            (Some(a), Some(b)) if a == b => glob(&p[1..], &s[1..]),
            _ => false,
        }
    }
    glob(p.as_bytes(), name.as_bytes())
}

/// `rxLatency[msg]` gives `Some("msg")` for prefix `rxLatency`.
fn bracketed<'a>(name: &'a str, prefix: &str) -> Option<&'a str> {
    name.strip_prefix(prefix)?.strip_prefix('[')?.strip_suffix(']')
}

fn in_window(t: SimTime, w: Option<(SimTime, SimTime)>) -> bool {
    w.is_none_or(|(a, b)| t >= a && t <= b)
}

fn us(ps: f64) -> String {
    format!("{:.3}", ps / 1e6)
}

pub fn analyze(
    dir: &Path,
    metric: Metric,
    filter: Option<&str>,
    window: Option<(SimTime, SimTime)>,
) -> Result<Analysis, CliError> {
    let store = load_results(dir).map_err(|e| match e {
        ivnsim_core::metrics::export::ExportError::Io { path, source } => CliError::Io { path, source },
        other => CliError::Semantic(other.to_string()),
    })?;
    let a = match metric {
        Metric::Latency => latency(&store, filter, window),
        Metric::Jitter => jitter_table(&store, filter, window),
        Metric::Bandwidth => bandwidth(&store, filter, window)?,
        Metric::Queues => queues(&store, filter, window),
        Metric::Credit => credit(&store, filter, window),
    };
    if a.rows == 0 {
        return Err(CliError::Semantic(format!("no {metric:?} series match").to_lowercase()));
    }
    Ok(a)
}

/// Latency series per message name, across sinks.
fn latency_series<'a>(
    store: &'a MetricStore,
    filter: Option<&str>,
) -> BTreeMap<&'a str, Vec<(&'a str, &'a [(SimTime, f64)])>> {
    let mut by_msg: BTreeMap<&str, Vec<(&str, &[(SimTime, f64)])>> = BTreeMap::new();
    for (module, name, pts) in store.vector_refs() {
        if let Some(msg) = bracketed(name, "rxLatency") {
            if matches(filter, msg) {
                by_msg.entry(msg).or_default().push((module, pts));
            }
        }
    }
    by_msg
}

fn latency(store: &MetricStore, filter: Option<&str>, window: Option<(SimTime, SimTime)>) -> Analysis {
    let mut rows = Vec::new();
    let mut plot = String::from("message,sink,time_ps,latency_ps\n");
    for (msg, sinks) in latency_series(store, filter) {
        let mut values = Vec::new();
        for (sink, pts) in &sinks {
            for (t, v) in pts.iter().filter(|(t, _)| in_window(*t, window)) {
                values.push(*v);
                let _ = writeln!(plot, "{msg},{sink},{},{v}", t.ticks());
            }
        }
        if let Some(s) = LatencyStats::of(values) {
            rows.push(vec![msg.to_string(), sinks.len().to_string(), s.count.to_string(), us(s.min), us(s.max), us(s.mean)]);
        }
    }
    let n = rows.len();
    Analysis {
        table: table::render(&["message", "sinks", "samples", "min_us", "max_us", "mean_us"], &rows),
        plot,
        rows: n,
    }
}

fn jitter_table(store: &MetricStore, filter: Option<&str>, window: Option<(SimTime, SimTime)>) -> Analysis {
    let mut rows = Vec::new();
    let mut plot = String::from("message,sink,jitter_ps\n");
    for (msg, sinks) in latency_series(store, filter) {
        let mut worst = SimTime::ZERO;
        for (sink, pts) in &sinks {
            let lats: Vec<SimTime> = pts
                .iter()
                .filter(|(t, _)| in_window(*t, window))
                .map(|(_, v)| SimTime(*v as i64))
                .collect();
            let j = jitter(&lats);
            worst = worst.max(j);
            let _ = writeln!(plot, "{msg},{sink},{}", j.ticks());
        }
        rows.push(vec![msg.to_string(), sinks.len().to_string(), us(worst.ticks() as f64)]);
    }
    let n = rows.len();
    Analysis { table: table::render(&["message", "sinks", "max_jitter_us"], &rows), plot, rows: n }
}

/// Link or bus a transmitter series belongs to: `port0-l1` is on `l1`, bus
/// series live on the bus module itself.
fn link_of<'a>(module: &'a str, name: &'a str) -> Option<(&'a str, &'static str)> {
    match bracketed(name, "txBits").or_else(|| bracketed(name, "bitsPerSec")) {
        Some(label) => label.split_once('-').map(|(_, link)| (link, "eth")),
        None if name == "txBits" || name == "bitsPerSec" => Some((module.split_once('.')?.1, "can")),
        None => None,
    }
}

fn bandwidth(store: &MetricStore, filter: Option<&str>, window: Option<(SimTime, SimTime)>) -> Result<Analysis, CliError> {
    // Per link: kind and bit/s of each transmitting direction.
    let mut links: BTreeMap<String, (&str, Vec<f64>)> = BTreeMap::new();
    let mut plot = String::from("link,transmitter,time_ps,bits\n");
    match window {
        None => {
            for s in store.scalars() {
                if !s.name.starts_with("bitsPerSec") {
                    continue;
                }
                let Some((link, kind)) = link_of(&s.module, &s.name) else { continue };
                if matches(filter, link) {
                    links.entry(link.to_string()).or_insert((kind, Vec::new())).1.push(s.value);
                }
            }
        }
        Some((t0, t1)) => {
            for (module, name, pts) in store.vector_refs() {
                let Some((link, kind)) = link_of(module, name) else { continue };
                if !name.starts_with("txBits") || !matches(filter, link) {
                    continue;
                }
                links.entry(link.to_string()).or_insert((kind, Vec::new())).1.push(utilized_bandwidth(pts, t0, t1));
                for (t, v) in pts.iter().filter(|(t, _)| in_window(*t, window)) {
                    let _ = writeln!(plot, "{link},{module}.{name},{},{v}", t.ticks());
                }
            }
            if links.is_empty() && store.scalars().any(|s| s.name.starts_with("bitsPerSec")) {
                return Err(CliError::Semantic(
                    "windowed bandwidth needs transmission vectors (settings.recordTx)".into(),
                ));
            }
        }
    }
    if window.is_none() {
        for (module, name, pts) in store.vector_refs() {
            let Some((link, _)) = link_of(module, name) else { continue };
            if name.starts_with("txBits") && links.contains_key(link) {
                for (t, v) in pts {
                    let _ = writeln!(plot, "{link},{module}.{name},{},{v}", t.ticks());
                }
            }
        }
    }
    let rows: Vec<Vec<String>> = links
        .iter()
        .map(|(link, (kind, dirs))| {
            let total: f64 = dirs.iter().sum();
            let peak = dirs.iter().copied().fold(0.0, f64::max);
            vec![link.to_string(), kind.to_string(), format!("{total:.0}"), format!("{peak:.0}")]
        })
        .collect();
    let n = rows.len();
    Ok(Analysis { table: table::render(&["link", "kind", "bits_per_s", "peak_direction_bits_per_s"], &rows), plot, rows: n })
}

fn queues(store: &MetricStore, filter: Option<&str>, window: Option<(SimTime, SimTime)>) -> Analysis {
    let mut rows = Vec::new();
    let mut plot = String::from("queue,time_ps,length\n");
    let drops: BTreeMap<(String, String), f64> = store
        .scalars()
        .filter_map(|s| bracketed(&s.name, "drops").map(|q| ((s.module.clone(), q.to_string()), s.value)))
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    for (module, name, pts) in store.vector_refs() {
        let Some(q) = bracketed(name, "QueueLength") else { continue };
        let full = format!("{module}.{q}");
        if !matches(filter, &full) {
            continue;
        }
        seen.insert((module.to_string(), q.to_string()));
        let vals: Vec<f64> = pts.iter().filter(|(t, _)| in_window(*t, window)).map(|(_, v)| *v).collect();
        for (t, v) in pts.iter().filter(|(t, _)| in_window(*t, window)) {
            let _ = writeln!(plot, "{full},{},{v}", t.ticks());
        }
        let max = vals.iter().copied().fold(0.0, f64::max);
        let d = drops.get(&(module.to_string(), q.to_string())).copied().unwrap_or(0.0);
        rows.push(vec![full, vals.len().to_string(), format!("{max:.0}"), format!("{d:.0}")]);
    }
    for ((module, q), d) in &drops {
        let full = format!("{module}.{q}");
        if !seen.contains(&(module.clone(), q.clone())) && matches(filter, &full) {
            rows.push(vec![full, "0".into(), "-".into(), format!("{d:.0}")]);
        }
    }
    let n = rows.len();
    Analysis { table: table::render(&["queue", "samples", "max_length", "drops"], &rows), plot, rows: n }
}

fn credit(store: &MetricStore, filter: Option<&str>, window: Option<(SimTime, SimTime)>) -> Analysis {
    let mut rows = Vec::new();
    let mut plot = String::from("shaper,time_ps,credit_bits\n");
    for (module, name, pts) in store.vector_refs() {
        let Some(q) = bracketed(name, "credit") else { continue };
        let full = format!("{module}.{q}");
        if !matches(filter, &full) {
            continue;
        }
        let vals: Vec<f64> = pts.iter().filter(|(t, _)| in_window(*t, window)).map(|(_, v)| *v).collect();
        for (t, v) in pts.iter().filter(|(t, _)| in_window(*t, window)) {
            let _ = writeln!(plot, "{full},{},{v}", t.ticks());
        }
        if let Some(s) = LatencyStats::of(vals) {
            rows.push(vec![full, s.count.to_string(), format!("{:.1}", s.min), format!("{:.1}", s.max)]);
        }
    }
    let n = rows.len();
    Analysis { table: table::render(&["shaper", "points", "min_bits", "max_bits"], &rows), plot, rows: n }
}
