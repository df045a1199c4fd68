//! Vectors and scalars recorded during a run.

pub mod analysis;
pub mod export;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub use analysis::{jitter, utilized_bandwidth, LatencyStats};
pub use export::{export_csv, export_structured, series_file_name, ExportFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSeries {
    pub module: String,
    pub name: String,
    pub points: Vec<(SimTime, f64)>,
}

impl VectorSeries {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub module: String,
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// All results of one run, ordered by (module, name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricStore {
    vectors: BTreeMap<(String, String), Vec<(SimTime, f64)>>,
    scalars: BTreeMap<(String, String), (f64, String)>,
}

impl MetricStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a point. Timestamps of one series must not decrease.
    pub fn record(&mut self, module: &str, name: &str, time: SimTime, value: f64) {
        let pts = self
            .vectors
            .entry((module.to_string(), name.to_string()))
            .or_default();
        debug_assert!(pts.last().is_none_or(|p| p.0 <= time), "{module}.{name} went back in time");
        pts.push((time, value));
    }

    /// Creates an empty series so it is exported even without points.
    pub fn declare(&mut self, module: &str, name: &str) {
        self.vectors.entry((module.to_string(), name.to_string())).or_default();
    }

    pub fn set_scalar(&mut self, module: &str, name: &str, value: f64, unit: &str) {
        self.scalars
            .insert((module.to_string(), name.to_string()), (value, unit.to_string()));
    }

    pub fn add_scalar(&mut self, module: &str, name: &str, delta: f64, unit: &str) {
        let e = self
            .scalars
            .entry((module.to_string(), name.to_string()))
            .or_insert((0.0, unit.to_string()));
        e.0 += delta;
    }

    pub fn vector(&self, module: &str, name: &str) -> Option<&[(SimTime, f64)]> {
        self.vectors
            .get(&(module.to_string(), name.to_string()))
            .map(Vec::as_slice)
    }

    pub fn scalar(&self, module: &str, name: &str) -> Option<f64> {
        self.scalars.get(&(module.to_string(), name.to_string())).map(|s| s.0)
    }

    pub fn vectors(&self) -> impl Iterator<Item = VectorSeries> + '_ {
        self.vectors.iter().map(|((m, n), p)| VectorSeries {
            module: m.clone(),
            name: n.clone(),
            points: p.clone(),
        })
    }

    /// Borrowing iteration over (module, name, points).
    pub fn vector_refs(&self) -> impl Iterator<Item = (&str, &str, &[(SimTime, f64)])> {
        self.vectors
            .iter()
            .map(|((m, n), p)| (m.as_str(), n.as_str(), p.as_slice()))
    }

    pub fn scalars(&self) -> impl Iterator<Item = ScalarResult> + '_ {
        self.scalars.iter().map(|((m, n), (v, u))| ScalarResult {
            module: m.clone(),
            name: n.clone(),
            value: *v,
            unit: u.clone(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty() && self.scalars.is_empty()
    }

    /// Rebuilds a store from exported parts.
    pub fn from_parts(vectors: Vec<VectorSeries>, scalars: Vec<ScalarResult>) -> Self {
        let mut s = MetricStore::new();
        for v in vectors {
            s.vectors.insert((v.module, v.name), v.points);
        }
        for r in scalars {
            s.scalars.insert((r.module, r.name), (r.value, r.unit));
        }
        s
    }
}

/// Queue occupancy bookkeeping feeding `QueueLength` vectors and drop scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueEvent {
    Enqueue,
    Dequeue,
    Drop,
}

/// Records a queue event; `occupancy` is the length after the event.
pub fn record_queue(
    store: &mut MetricStore,
    module: &str,
    queue: &str,
    now: SimTime,
    event: QueueEvent,
    occupancy: usize,
) {
    match event {
        QueueEvent::Enqueue | QueueEvent::Dequeue => {
            store.record(module, &format!("QueueLength[{queue}]"), now, occupancy as f64)
        }
        QueueEvent::Drop => store.add_scalar(module, &format!("drops[{queue}]"), 1.0, "frames"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_recording() {
        let mut s = MetricStore::new();
        record_queue(&mut s, "n.s1", "port0,BE", SimTime(5), QueueEvent::Enqueue, 1);
        record_queue(&mut s, "n.s1", "port0,BE", SimTime(6), QueueEvent::Enqueue, 2);
        record_queue(&mut s, "n.s1", "port0,BE", SimTime(7), QueueEvent::Drop, 2);
        record_queue(&mut s, "n.s1", "port0,BE", SimTime(9), QueueEvent::Dequeue, 1);
        assert_eq!(
            s.vector("n.s1", "QueueLength[port0,BE]").unwrap(),
            &[(SimTime(5), 1.0), (SimTime(6), 2.0), (SimTime(9), 1.0)]
        );
        assert_eq!(s.scalar("n.s1", "drops[port0,BE]"), Some(1.0));
    }
}
