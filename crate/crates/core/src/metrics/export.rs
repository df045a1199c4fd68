//! CSV and JSON export of a [`MetricStore`].
//!
//! CSV layout: one `«module».«series».csv` per vector (`time_ps,value`),
//! `scalars.csv` (`module,name,value,unit`) and `index.csv` mapping vector
//! files back to (module, name).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MetricStore, ScalarResult, VectorSeries};
use crate::time::SimTime;

pub const SCALARS_FILE: &str = "scalars.csv";
pub const INDEX_FILE: &str = "index.csv";
pub const STRUCTURED_FILE: &str = "results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Structured,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed results in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ExportError + '_ {
    move |e| {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(source) = e.into_kind() {
                return ExportError::Io { path: path.to_path_buf(), source };
            }
            unreachable!("is_io_error implies ErrorKind::Io");
        }
        ExportError::Malformed { path: path.to_path_buf(), reason: e.to_string() }
    }
}

pub fn series_file_name(module: &str, name: &str) -> String {
    format!("{module}.{name}.csv").replace(['/', '\\'], "_")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StructuredResults {
    pub vectors: Vec<VectorSeries>,
    pub scalars: Vec<ScalarResult>,
}

/// Writes the CSV layout into `dir`; returns the written files in order.
pub fn export_csv(store: &MetricStore, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let index_path = dir.join(INDEX_FILE);
    let mut index = csv::Writer::from_path(&index_path).map_err(csv_err(&index_path))?;
    index.write_record(["file", "module", "name"]).map_err(csv_err(&index_path))?;
    for (module, name, points) in store.vector_refs() {
        let file = series_file_name(module, name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["time_ps", "value"]).map_err(csv_err(&path))?;
        for (t, v) in points {
            w.write_record([t.ticks().to_string(), v.to_string()])
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        index.write_record([file.as_str(), module, name]).map_err(csv_err(&index_path))?;
        written.push(path);
    }
    index.flush().map_err(io_err(&index_path))?;
    written.push(index_path);

    let path = dir.join(SCALARS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["module", "name", "value", "unit"]).map_err(csv_err(&path))?;
    for s in store.scalars() {
        w.write_record([s.module, s.name, s.value.to_string(), s.unit])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

/// Writes one self-describing JSON document.
pub fn export_structured(store: &MetricStore, dir: &Path) -> Result<PathBuf, ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let doc = StructuredResults { vectors: store.vectors().collect(), scalars: store.scalars().collect() };
    let path = dir.join(STRUCTURED_FILE);
    let text = serde_json::to_string_pretty(&doc).expect("results serialize");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads results written by either exporter, preferring the JSON document.
pub fn load_results(dir: &Path) -> Result<MetricStore, ExportError> {
    let json = dir.join(STRUCTURED_FILE);
    if json.exists() {
        let text = fs::read_to_string(&json).map_err(io_err(&json))?;
        let doc: StructuredResults = serde_json::from_str(&text)
            .map_err(|e| ExportError::Malformed { path: json.clone(), reason: e.to_string() })?;
        return Ok(MetricStore::from_parts(doc.vectors, doc.scalars));
    }

    let index_path = dir.join(INDEX_FILE);
    let mut vectors = Vec::new();
    let mut rdr = csv::Reader::from_path(&index_path).map_err(csv_err(&index_path))?;
    for row in rdr.records() {
        let row = row.map_err(csv_err(&index_path))?;
        let (file, module, name) = (&row[0], &row[1], &row[2]);
        let path = dir.join(file);
        let mut points = Vec::new();
        let mut r = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err(&path))?;
            let bad = |_| ExportError::Malformed { path: path.clone(), reason: "bad number".into() };
            let t: i64 = rec[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let v: f64 = rec[1].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
            points.push((SimTime(t), v));
        }
        vectors.push(VectorSeries { module: module.to_string(), name: name.to_string(), points });
    }

    let path = dir.join(SCALARS_FILE);
    let mut scalars = Vec::new();
    let mut r = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| ExportError::Malformed { path: path.clone(), reason: "bad scalar".into() })?;
        scalars.push(ScalarResult {
            module: rec[0].to_string(),
            name: rec[1].to_string(),
            value,
            unit: rec[3].to_string(),
        });
    }
    Ok(MetricStore::from_parts(vectors, scalars))
}
