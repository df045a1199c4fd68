//! The `run` subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ivnsim_core::metrics::analysis::utilized_bandwidth;
use ivnsim_core::metrics::export::{export_csv, export_structured};
use ivnsim_core::{NetworkConfig, RunResult, SimTime, Simulation};

use crate::{load_config, table, CliError, Format, SourceArgs};

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub input: PathBuf,
    pub horizon: Option<SimTime>,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    pub format: Format,
    pub window: Option<(SimTime, SimTime)>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub result: RunResult,
    pub summary: String,
    /// Inline ini keys that matched nothing.
    pub ignored: Vec<String>,
}

/// Applies overrides in precedence order: inline ini, then the horizon and
/// seed flags, then `--set` entries.
pub fn prepare(cfg: &mut NetworkConfig, spec: &RunSpec) -> Result<Vec<String>, CliError> {
    let semantic = |e: ivnsim_core::config::OverrideError| CliError::Semantic(e.to_string());
    let inline = cfg.apply_inline_ini().map_err(semantic)?;
    if let Some(h) = spec.horizon {
        cfg.settings.horizon = h;
    }
    if let Some(s) = spec.seed {
        cfg.settings.seed = s;
    }
    for o in &spec.overrides {
        let r = cfg.apply_override(o).map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(k) = r.unknown.first() {
            return Err(CliError::Usage(format!("unknown override key `{k}`")));
        }
    }
    if cfg.settings.horizon <= SimTime::ZERO {
        return Err(CliError::Usage("horizon must be positive".into()));
    }
    Ok(inline.unknown)
}

/// Loads, runs and exports one scenario.
pub fn run_scenario(spec: &RunSpec, src: &SourceArgs, err: &mut dyn Write) -> Result<RunOutcome, CliError> {
    let mut cfg = load_config(&spec.input, src, err)?;
    let ignored = prepare(&mut cfg, spec)?;
    let horizon = cfg.settings.horizon;
    let seed = cfg.settings.seed;
    let sim = Simulation::new(cfg).map_err(|e| CliError::Semantic(e.to_string()))?;
    let result = sim.run().map_err(|e| CliError::Semantic(e.to_string()))?;
    export(&result, &spec.out, spec.format)?;
    let summary = summarize(&spec.input, horizon, seed, &result, spec.window);
    Ok(RunOutcome { result, summary, ignored })
}

fn export(result: &RunResult, dir: &Path, format: Format) -> Result<(), CliError> {
    let io = |e: ivnsim_core::metrics::export::ExportError| match e {
        ivnsim_core::metrics::export::ExportError::Io { path, source } => CliError::Io { path, source },
        other => CliError::Semantic(other.to_string()),
    };
    match format {
        Format::Csv => export_csv(&result.metrics, dir).map(|_| ()).map_err(io),
        Format::Structured => export_structured(&result.metrics, dir).map(|_| ()).map_err(io),
    }
}

fn summarize(input: &Path, horizon: SimTime, seed: u64, r: &RunResult, window: Option<(SimTime, SimTime)>) -> String {
    let mut s = format!(
        "{}: horizon {horizon}, seed {seed}, {} events\n",
        input.display(),
        r.summary.events_dispatched
    );
    let rows: Vec<Vec<String>> = r
        .segments
        .iter()
        .map(|g| {
            vec![g.segment.clone(), g.frames_sent.to_string(), g.frames_received.to_string(), g.frames_dropped.to_string()]
        })
        .collect();
    s += &table::render(&["segment", "sent", "received", "dropped"], &rows);
    let rows: Vec<Vec<String>> = r
        .messages
        .iter()
        .map(|(name, released, delivered)| vec![name.clone(), released.to_string(), delivered.to_string()])
        .collect();
    s += &table::render(&["message", "released", "delivered"], &rows);
    if let Some((t0, t1)) = window {
        let rows: Vec<Vec<String>> = r
            .metrics
            .vector_refs()
            .filter(|(_, name, _)| name.starts_with("txBits"))
            .map(|(module, name, pts)| {
                vec![format!("{module}.{name}"), format!("{:.0}", utilized_bandwidth(pts, t0, t1))]
            })
            .collect();
        s += &format!("bandwidth in [{t0}, {t1}]\n");
        s += &table::render(&["transmitter", "bit/s"], &rows);
    }
    s
}

/// Runs `specs` on up to `jobs` worker threads; summaries are printed in
/// input order. The first failure decides the exit status.
pub fn run_many(
    specs: &[RunSpec],
    src: &SourceArgs,
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<(Vec<u8>, Result<RunOutcome, CliError>)>>> =
        specs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(specs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let mut diag = Vec::new();
                let r = run_scenario(spec, src, &mut diag);
                *slots[i].lock().expect("slot lock") = Some((diag, r));
            });
        }
    });
    let mut first_err = None;
    for (spec, slot) in specs.iter().zip(slots) {
        let (diag, r) = slot.into_inner().expect("slot lock").expect("every spec ran");
        let _ = err.write_all(&diag);
        match r {
            Ok(o) => {
                for k in &o.ignored {
                    let _ = writeln!(err, "{}: warning: ignored inline setting `{k}`", spec.input.display());
                }
                let _ = write!(out, "{}", o.summary);
            }
            Err(e) => {
                if !matches!(e, CliError::Reported(_)) {
                    let _ = writeln!(err, "{}: error: {e}", spec.input.display());
                }
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(CliError::Reported(e.exit_code())),
        None => Ok(()),
    }
}
