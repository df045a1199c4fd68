use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Wire bits of the transmissions completed in `[t0, t1]` divided by the
/// window length, in bit/s. `tx` holds (completion time, bits).
pub fn utilized_bandwidth(tx: &[(SimTime, f64)], t0: SimTime, t1: SimTime) -> f64 {
    assert!(t1 > t0, "empty bandwidth window");
    let bits: f64 = tx
        .iter()
        .filter(|(t, _)| *t >= t0 && *t <= t1)
        .map(|(_, b)| *b)
        .sum();
    bits / (t1 - t0).as_secs_f64()
}

/// Largest change of latency between consecutive samples; zero below two samples.
pub fn jitter(latencies: &[SimTime]) -> SimTime {
    latencies
        .windows(2)
        .map(|w| w[1].abs_diff(w[0]))
        .max()
        .unwrap_or(SimTime::ZERO)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl LatencyStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut count = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            count += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (count > 0).then(|| LatencyStats { count, min, max, mean: sum / count as f64 })
    }
}
