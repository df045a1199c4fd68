//! Time-triggered transmission windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::PortId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmaWindow {
    pub ct_id: u32,
    pub port: PortId,
    pub offset: SimTime,
    pub duration: SimTime,
}

impl TdmaWindow {
    pub fn end(&self) -> SimTime {
        self.offset + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TdmaSchedule {
    pub cycle_length: SimTime,
    pub windows: Vec<TdmaWindow>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("windows of ct {a} and ct {b} overlap on port {port}")]
    Overlap { port: u32, a: u32, b: u32 },
    #[error("window of ct {ct_id} on port {port} exceeds the cycle")]
    BeyondCycle { port: u32, ct_id: u32 },
    #[error("cycle length must be positive when windows exist")]
    EmptyCycle,
}

impl TdmaSchedule {
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn check_invariants(&self) -> Result<(), ScheduleError> {
        if self.windows.is_empty() {
            return Ok(());
        }
        if self.cycle_length <= SimTime::ZERO {
            return Err(ScheduleError::EmptyCycle);
        }
        let mut by_port: std::collections::BTreeMap<PortId, Vec<&TdmaWindow>> = Default::default();
        for w in &self.windows {
            if w.offset < SimTime::ZERO || w.end() > self.cycle_length {
                return Err(ScheduleError::BeyondCycle { port: w.port.0, ct_id: w.ct_id });
            }
            by_port.entry(w.port).or_default().push(w);
        }
        for (port, mut ws) in by_port {
            ws.sort_by_key(|w| w.offset);
            for pair in ws.windows(2) {
                if pair[1].offset < pair[0].end() {
                    return Err(ScheduleError::Overlap { port: port.0, a: pair[0].ct_id, b: pair[1].ct_id });
                }
            }
        }
        Ok(())
    }

    pub fn for_port(&self, port: PortId) -> PortSchedule {
        let mut windows: Vec<PortWindow> = self
            .windows
            .iter()
            .filter(|w| w.port == port)
            .map(|w| PortWindow { ct_id: w.ct_id, offset: w.offset, duration: w.duration })
            .collect();
        windows.sort_by_key(|w| w.offset);
        PortSchedule { cycle: self.cycle_length, windows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortWindow {
    pub ct_id: u32,
    pub offset: SimTime,
    pub duration: SimTime,
}

/// Windows of one egress port, sorted by offset within the cycle.
#[derive(Debug, Clone, Default)]
pub struct PortSchedule {
    pub cycle: SimTime,
    pub windows: Vec<PortWindow>,
}

/// An absolute occurrence of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowInstance {
    pub ct_id: u32,
    pub start: SimTime,
    pub end: SimTime,
}

impl PortSchedule {
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    fn cycle_base(&self, now: SimTime) -> (SimTime, SimTime) {
        let pos = SimTime(now.ticks().rem_euclid(self.cycle.ticks()));
        (now - pos, pos)
    }

    /// The window instance containing `now`, if any (start inclusive, end exclusive).
    pub fn active(&self, now: SimTime) -> Option<WindowInstance> {
        if self.windows.is_empty() {
            return None;
        }
        let (base, pos) = self.cycle_base(now);
        let idx = self.windows.partition_point(|w| w.offset <= pos);
        let w = self.windows[..idx].last()?;
        (pos < w.offset + w.duration).then(|| WindowInstance {
            ct_id: w.ct_id,
            start: base + w.offset,
            end: base + w.offset + w.duration,
        })
    }

    /// First window instance starting at or after `now`.
    pub fn next_start(&self, now: SimTime) -> Option<WindowInstance> {
        if self.windows.is_empty() {
            return None;
        }
        let (base, pos) = self.cycle_base(now);
        let idx = self.windows.partition_point(|w| w.offset < pos);
        let (w, base) = match self.windows.get(idx) {
            Some(w) => (w, base),
            None => (&self.windows[0], base + self.cycle),
        };
        Some(WindowInstance {
            ct_id: w.ct_id,
            start: base + w.offset,
            end: base + w.offset + w.duration,
        })
    }

    /// Earliest start strictly after `now` of a window belonging to `ct_id`.
    pub fn next_start_for(&self, ct_id: u32, now: SimTime) -> Option<SimTime> {
        let (base, _) = self.cycle_base(now);
        self.windows
            .iter()
            .filter(|w| w.ct_id == ct_id)
            .map(|w| {
                let t = base + w.offset;
                if t > now {
                    t
                } else {
                    t + self.cycle
                }
            })
            .min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtCheck {
    Accept,
    Violation,
}

/// Accepts a TT frame whose reception completed at `arrival` if that lies in
/// one of its windows on the incoming port, with the end extended by `tolerance`.
pub fn tt_receive_check(ct_id: u32, arrival: SimTime, schedule: &PortSchedule, tolerance: SimTime) -> TtCheck {
    if schedule.cycle <= SimTime::ZERO {
        return TtCheck::Violation;
    }
    let (_, pos) = schedule.cycle_base(arrival);
    let inside = schedule.windows.iter().filter(|w| w.ct_id == ct_id).any(|w| {
        let hi = w.offset + w.duration + tolerance;
        (pos >= w.offset && pos <= hi) || pos + schedule.cycle <= hi
    });
    if inside {
        TtCheck::Accept
    } else {
        TtCheck::Violation
    }
}
