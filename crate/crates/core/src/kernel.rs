//! Discrete-event kernel: future event list, simulation clock and oscillators.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use num_rational::Ratio;
use num_traits::Signed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {at} while the clock is at {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("horizon {horizon} lies before the current time {now}")]
    HorizonInPast { horizon: SimTime, now: SimTime },
}

/// Identifies the module an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModuleId(pub u32);

/// Short tag naming an event kind, used for traces.
pub trait EventKind {
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub target: ModuleId,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<P> Eq for Event<P> {}
impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Event<P> {
    // BinaryHeap is a max-heap; invert so the smallest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_dispatched: u64,
    pub final_time: SimTime,
}

pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    fel: BinaryHeap<Event<P>>,
    cancelled: HashSet<u64>,
    rng: ChaCha8Rng,
    trace: Option<Sha256>,
    dispatched: u64,
}

impl<P: EventKind> Kernel<P> {
    pub fn new(seed: u64) -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            fel: BinaryHeap::new(),
            cancelled: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
            dispatched: 0,
        }
    }

    /// Hash every dispatched (time, seq, target, kind) into a running digest.
    pub fn enable_trace_digest(&mut self) {
        self.trace = Some(Sha256::new());
    }

    pub fn trace_digest(&self) -> Option<String> {
        self.trace
            .as_ref()
            .map(|h| hex_string(h.clone().finalize().as_slice()))
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn pending(&self) -> usize {
        self.fel.len() - self.cancelled.len()
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        target: ModuleId,
        payload: P,
    ) -> Result<EventHandle, KernelError> {
        if time < self.now {
            return Err(KernelError::SchedulingInPast { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.fel.push(Event { time, seq, target, payload });
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after now. Panics on past scheduling, which cannot
    /// happen for a non-negative delay.
    pub fn schedule_in(&mut self, delay: SimTime, target: ModuleId, payload: P) -> EventHandle {
        assert!(delay >= SimTime::ZERO, "negative delay {delay}");
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("forward scheduling cannot fail")
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    fn pop_live(&mut self, horizon: SimTime) -> Option<Event<P>> {
        loop {
            let head = self.fel.peek()?;
            if head.time > horizon {
                return None;
            }
            let ev = self.fel.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            return Some(ev);
        }
    }

    /// Dispatches every event with time <= `horizon` in (time, seq) order.
    /// Events at exactly `horizon` are dispatched.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> Result<RunSummary, KernelError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if horizon < self.now {
            return Err(KernelError::HorizonInPast { horizon, now: self.now });
        }
        let mut count = 0u64;
        while let Some(ev) = self.pop_live(horizon) {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            if let Some(h) = self.trace.as_mut() {
                h.update(ev.time.ticks().to_be_bytes());
                h.update(ev.seq.to_be_bytes());
                h.update(ev.target.0.to_be_bytes());
                h.update(ev.payload.kind().as_bytes());
            }
            count += 1;
            handler(self, ev);
        }
        self.now = horizon;
        self.dispatched += count;
        Ok(RunSummary {
            events_dispatched: count,
            final_time: self.now,
        })
    }

    pub fn total_dispatched(&self) -> u64 {
        self.dispatched
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Linearly drifting clock. `drift_ppm` > 0 means the local clock runs fast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oscillator {
    pub drift_ppm: Ratio<i64>,
    pub reference_offset: SimTime,
}

const PPM: i128 = 1_000_000;

impl Default for Oscillator {
    fn default() -> Self {
        Oscillator::ideal()
    }
}

impl Oscillator {
    pub fn ideal() -> Self {
        Oscillator {
            drift_ppm: Ratio::from_integer(0),
            reference_offset: SimTime::ZERO,
        }
    }

    pub fn with_drift(drift_ppm: Ratio<i64>) -> Self {
        assert!(
            drift_ppm.abs() < Ratio::from_integer(1_000_000),
            "drift must be below 10^6 ppm"
        );
        Oscillator {
            drift_ppm,
            reference_offset: SimTime::ZERO,
        }
    }

    pub fn is_ideal(&self) -> bool {
        *self.drift_ppm.numer() == 0
    }

    /// ideal = offset + local * 10^6 / (10^6 + drift)
    pub fn local_to_ideal(&self, local: SimTime) -> SimTime {
        let num = *self.drift_ppm.numer() as i128;
        let den = *self.drift_ppm.denom() as i128;
        let scaled = round_div(local.ticks() as i128 * PPM * den, PPM * den + num);
        self.reference_offset + SimTime(i64::try_from(scaled).expect("time overflow"))
    }

    /// local = (ideal - offset) * (10^6 + drift) / 10^6
    pub fn ideal_to_local(&self, ideal: SimTime) -> SimTime {
        let num = *self.drift_ppm.numer() as i128;
        let den = *self.drift_ppm.denom() as i128;
        let rel = (ideal - self.reference_offset).ticks() as i128;
        let scaled = round_div(rel * (PPM * den + num), PPM * den);
        SimTime(i64::try_from(scaled).expect("time overflow"))
    }
}

/// Division rounding to nearest, ties away from zero. `d` must be non-zero.
fn round_div(n: i128, d: i128) -> i128 {
    let (n, d) = if d < 0 { (-n, -d) } else { (n, d) };
    let q = n / d;
    let r = n % d;
    if 2 * r.abs() >= d {
        q + n.signum()
    } else {
        q
    }
}
