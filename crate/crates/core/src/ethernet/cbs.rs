//! Credit-based shaper state for one AVB class on one egress port.
//!
//! Credit is kept in bit-picoseconds per second (bits x 10^12) so that
//! `slope [bit/s] * dt [ps]` is an exact integer.

use serde::{Deserialize, Serialize};

use crate::time::{SimTime, TICKS_PER_S};

pub const CREDIT_SCALE: i128 = TICKS_PER_S as i128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CbsPhase {
    /// Frames of this class are queued but not being sent.
    IdleWaiting,
    /// A frame of this class is on the wire.
    Transmitting,
    /// No frame of this class is queued.
    QueueEmpty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CreditState {
    /// Scaled credit, see module docs.
    pub credit: i128,
    pub idle_slope: i64,
    pub send_slope: i64,
    pub last_update: SimTime,
}

impl CreditState {
    pub fn new(idle_slope: u64, port_rate: u64) -> Self {
        CreditState {
            credit: 0,
            idle_slope: idle_slope as i64,
            send_slope: idle_slope as i64 - port_rate as i64,
            last_update: SimTime::ZERO,
        }
    }

    pub fn credit_bits(&self) -> f64 {
        self.credit as f64 / CREDIT_SCALE as f64
    }

    /// Time from `now` until a negative credit has recovered to zero at
    /// idle slope, rounded up to the tick.
    pub fn time_to_zero(&self) -> Option<SimTime> {
        if self.credit >= 0 {
            return Some(SimTime::ZERO);
        }
        if self.idle_slope <= 0 {
            return None;
        }
        let slope = self.idle_slope as i128;
        let ticks = (-self.credit + slope - 1) / slope;
        Some(SimTime(ticks as i64))
    }
}

pub fn scaled_bits(bits: i64) -> i128 {
    bits as i128 * CREDIT_SCALE
}

/// Advances `state` to `now` assuming `phase` held since the last update.
///
/// While waiting the credit grows at idle slope; while transmitting it moves
/// at send slope. With an empty queue a positive credit is reset to zero and a
/// negative one recovers at idle slope, stopping at zero.
pub fn cbs_update(state: CreditState, now: SimTime, phase: CbsPhase) -> CreditState {
    assert!(now >= state.last_update, "credit update goes back in time");
    let dt = (now - state.last_update).ticks() as i128;
    let credit = match phase {
        CbsPhase::IdleWaiting => state.credit + state.idle_slope as i128 * dt,
        CbsPhase::Transmitting => state.credit + state.send_slope as i128 * dt,
        CbsPhase::QueueEmpty => {
            if state.credit > 0 {
                0
            } else {
                (state.credit + state.idle_slope as i128 * dt).min(0)
            }
        }
    };
    CreditState {
        credit,
        last_update: now,
        ..state
    }
}

/// One point of a recorded credit trajectory: the exact credit at `time` and
/// the phase in effect from then on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditPoint {
    pub time: SimTime,
    pub credit: i128,
    pub phase: CbsPhase,
}

/// Shaper for one class including its current phase and optional trace.
#[derive(Debug, Clone)]
pub struct Shaper {
    pub state: CreditState,
    pub phase: CbsPhase,
    pub trace: Option<Vec<CreditPoint>>,
}

impl Shaper {
    pub fn new(idle_slope: u64, port_rate: u64, record: bool) -> Self {
        let mut s = Shaper {
            state: CreditState::new(idle_slope, port_rate),
            phase: CbsPhase::QueueEmpty,
            trace: record.then(Vec::new),
        };
        s.record(SimTime::ZERO);
        s
    }

    fn record(&mut self, time: SimTime) {
        let point = CreditPoint {
            time,
            credit: self.state.credit,
            phase: self.phase,
        };
        if let Some(t) = self.trace.as_mut() {
            if t.last() != Some(&point) {
                t.push(point);
            }
        }
    }

    /// Brings the credit up to `now` under the current phase.
    pub fn advance(&mut self, now: SimTime) {
        if self.phase == CbsPhase::QueueEmpty && self.state.credit < 0 && self.trace.is_some() {
            // mark where the recovery ramp flattens out
            if let Some(dt) = self.state.time_to_zero() {
                let cross = self.state.last_update + dt;
                if cross < now {
                    self.state = cbs_update(self.state, cross, CbsPhase::QueueEmpty);
                    self.record(cross);
                }
            }
        }
        self.state = cbs_update(self.state, now, self.phase);
    }

    pub fn set_phase(&mut self, now: SimTime, phase: CbsPhase) {
        self.advance(now);
        self.phase = phase;
        if phase == CbsPhase::QueueEmpty && self.state.credit > 0 {
            self.record(now);
            self.state.credit = 0;
        }
        self.record(now);
    }

    /// Credit at `now` without changing state.
    pub fn credit_at(&self, now: SimTime) -> i128 {
        cbs_update(self.state, now, self.phase).credit
    }

    /// Earliest time >= now at which the credit is non-negative, if it ever
    /// becomes so.
    pub fn eligible_at(&self, now: SimTime) -> Option<SimTime> {
        let s = cbs_update(self.state, now, self.phase);
        s.time_to_zero().map(|dt| now + dt)
    }
}
