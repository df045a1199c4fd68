use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use ivnsim_andl::{compile_source, CompileOptions};
use ivnsim_core::metrics::export::export_csv;
use ivnsim_core::{NetworkConfig, RunResult, SimTime, Simulation};
use sha2::{Digest, Sha256};

pub fn compile(text: &str) -> NetworkConfig {
    match compile_source(text, &CompileOptions::default()) {
        Ok((cfg, _)) => cfg,
        Err(diags) => {
            let mut msg = String::new();
            for d in diags {
                let _ = writeln!(msg, "{d}");
            }
            panic!("scenario does not compile:\n{msg}\n{text}");
        }
    }
}

pub fn try_compile(text: &str) -> Option<NetworkConfig> {
    compile_source(text, &CompileOptions::default()).ok().map(|(c, _)| c)
}

pub fn run(mut cfg: NetworkConfig, horizon: SimTime, trace: bool) -> RunResult {
    cfg.apply_inline_ini().expect("inline settings");
    cfg.settings.horizon = horizon;
    cfg.settings.recording.trace = trace;
    Simulation::new(cfg).expect("valid configuration").run().expect("run completes")
}

/// Latency samples of `msg` at `sink`, in ps.
pub fn latencies(r: &RunResult, net: &str, sink: &str, msg: &str) -> Vec<i64> {
    r.metrics
        .vector(&format!("{net}.{sink}"), &format!("rxLatency[{msg}]"))
        .map(|pts| pts.iter().map(|(_, v)| *v as i64).collect())
        .unwrap_or_default()
}

pub fn max_latency(r: &RunResult, net: &str, sink: &str, msg: &str) -> i64 {
    latencies(r, net, sink, msg).into_iter().max().unwrap_or(i64::MIN)
}

/// SHA-256 over every exported file, in name order.
pub fn export_digest(r: &RunResult, dir: &Path) -> String {
    export_csv(&r.metrics, dir).expect("export");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Worst-case stuffed CAN frame length in bits for `n` data bytes.
pub fn can_bits(n: u64) -> u64 {
    47 + 8 * n + (34 + 8 * n) / 4
}

/// Frames sent per segment.
pub fn segment_frames(r: &RunResult) -> BTreeMap<String, u64> {
    r.segments.iter().map(|s| (s.segment.clone(), s.frames_sent)).collect()
}
