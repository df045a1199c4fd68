//! ANDL: a small language for declaring in-vehicle network topologies and
//! mapping messages onto traffic classes. This crate parses it, checks it and
//! compiles it into an [`ivnsim_core::NetworkConfig`].

pub mod ast;
pub mod diag;
pub mod elaborate;
pub mod lexer;
pub mod parser;
pub mod tdma;

pub use ast::{print, AndlFile};
pub use diag::{has_errors, Diagnostic, Pos, Severity};
pub use elaborate::{compile_file, CompileOptions, Compiled};
pub use parser::parse;
pub use tdma::{generate_tdma_schedule, GenError, TtFlow, TtHop, DEFAULT_CYCLE_CAP};

use ivnsim_core::NetworkConfig;

/// All diagnostics for `file`: semantic errors, warnings and schedule
/// feasibility.
pub fn validate(file: &AndlFile, opts: &CompileOptions) -> Vec<Diagnostic> {
    compile_file(file, opts).1
}

/// Compiles `file`; on failure returns the diagnostics, errors included.
pub fn compile(file: &AndlFile, opts: &CompileOptions) -> Result<(Compiled, Vec<Diagnostic>), Vec<Diagnostic>> {
    match compile_file(file, opts) {
        (Some(c), diags) => Ok((c, diags)),
        (None, diags) => Err(diags),
    }
}

/// Concatenates several parsed sources, e.g. a types file and a network file.
pub fn merge(files: impl IntoIterator<Item = AndlFile>) -> AndlFile {
    let mut out = AndlFile::default();
    for f in files {
        out.types.extend(f.types);
        out.networks.extend(f.networks);
    }
    out
}

/// Parse plus compile in one step. Syntax errors stop before elaboration.
pub fn compile_source(text: &str, opts: &CompileOptions) -> Result<(NetworkConfig, Vec<Diagnostic>), Vec<Diagnostic>> {
    let (file, diags) = parse(text);
    if has_errors(&diags) {
        return Err(diags);
    }
    let (c, mut more) = compile(&file, opts)?;
    let mut all = diags;
    all.append(&mut more);
    Ok((c.config, all))
}
