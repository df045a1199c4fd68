//! First-fit TDMA window placement for time-triggered flows.
//!
//! Flows are placed in ascending period order. Each hop of a flow gets the
//! earliest slot at or after the moment the frame can reach that port. A
//! candidate slot that collides with an already placed window jumps forward
//! past it. The result is feasible but not optimal.

use ivnsim_core::ethernet::{TdmaSchedule, TdmaWindow};
use ivnsim_core::{PortId, SimTime};
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CYCLE_CAP: SimTime = SimTime::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtHop {
    pub port: PortId,
    /// Window length on this port.
    pub duration: SimTime,
    /// Store-and-forward delay of the device the port feeds.
    pub delay_after: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtFlow {
    pub ct_id: u32,
    pub period: SimTime,
    /// Earliest time the first frame is queued at the first hop.
    pub release: SimTime,
    pub hops: Vec<TtHop>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("ct {ct_id}: no feasible window on port {port}")]
    Infeasible { ct_id: u32, port: u32 },
    #[error("schedule cycle {cycle} exceeds the cap of {cap}")]
    CycleTooLong { cycle: SimTime, cap: SimTime },
    #[error("ct {ct_id}: period must be positive")]
    BadPeriod { ct_id: u32 },
}

/// Placed windows of one hop, in absolute time of the first instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub flow: usize,
    pub hop: usize,
    pub start: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub schedule: TdmaSchedule,
    pub placements: Vec<Placement>,
}

pub fn generate_tdma_schedule(flows: &[TtFlow], cap: SimTime) -> Result<TdmaSchedule, GenError> {
    generate_with_placements(flows, cap).map(|g| g.schedule)
}

pub fn generate_with_placements(flows: &[TtFlow], cap: SimTime) -> Result<Generated, GenError> {
    let mut cycle: i64 = 0;
    for f in flows {
        if f.period <= SimTime::ZERO {
            return Err(GenError::BadPeriod { ct_id: f.ct_id });
        }
        let wide = if cycle == 0 {
            f.period.ticks() as i128
        } else {
            (cycle as i128).lcm(&(f.period.ticks() as i128))
        };
        if wide > cap.ticks() as i128 {
            let shown = SimTime(i64::try_from(wide).unwrap_or(i64::MAX));
            return Err(GenError::CycleTooLong { cycle: shown, cap });
        }
        cycle = wide as i64;
    }
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by_key(|&i| (flows[i].period, i));

    // Busy intervals per port in cycle coordinates, sorted by start.
    let mut busy: std::collections::BTreeMap<PortId, Vec<(i64, i64)>> = Default::default();
    let mut windows = Vec::new();
    let mut placements = Vec::new();

    for fi in order {
        let f = &flows[fi];
        let p = f.period.ticks();
        let mut ready = f.release.ticks();
        for (hi, hop) in f.hops.iter().enumerate() {
            let d = hop.duration.ticks();
            let infeasible = GenError::Infeasible { ct_id: f.ct_id, port: hop.port.0 };
            if d > p {
                return Err(infeasible);
            }
            let occupied = busy.entry(hop.port).or_default();
            let limit = ready + (p - d);
            let mut t = ready;
            let start = loop {
                if t > limit {
                    return Err(infeasible);
                }
                let phase = t.rem_euclid(p);
                if phase + d > p {
                    t += p - phase;
                    continue;
                }
                match first_conflict(occupied, phase, d, p, cycle) {
                    Some(skip) => t += skip,
                    None => break t,
                };
            };
            let phase = start.rem_euclid(p);
            for j in 0..cycle / p {
                let s = phase + j * p;
                let pos = occupied.partition_point(|iv| iv.0 < s);
                occupied.insert(pos, (s, s + d));
                windows.push(TdmaWindow { ct_id: f.ct_id, port: hop.port, offset: SimTime(s), duration: hop.duration });
            }
            placements.push(Placement { flow: fi, hop: hi, start: SimTime(start) });
            ready = start + d + hop.delay_after.ticks();
        }
    }
    windows.sort_by_key(|w| (w.port, w.offset));
    Ok(Generated { schedule: TdmaSchedule { cycle_length: SimTime(cycle), windows }, placements })
}

/// Distance to jump forward when the instances of `[phase, phase+d)` hit a
/// busy interval, or `None` if all instances are free.
fn first_conflict(occupied: &[(i64, i64)], phase: i64, d: i64, p: i64, cycle: i64) -> Option<i64> {
    let mut skip: Option<i64> = None;
    for j in 0..cycle / p {
        let s = phase + j * p;
        let e = s + d;
        for &(bs, be) in occupied {
            if bs >= e {
                break;
            }
            if be > s {
                let k = be - s;
                skip = Some(skip.map_or(k, |x: i64| x.max(k)));
            }
        }
    }
    skip
}
