//! Aggregation pools with per-message hold-up times.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::can::{CanFrame, CanId};
use crate::time::SimTime;

/// How hold-up times are derived for messages without an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldUpPolicy {
    /// Forward immediately.
    #[default]
    Zero,
    /// id < 101: 0; 101-200: 25 %; 201-300: 50 %; above: 75 % of the period.
    Config1,
    /// As `Config1`, but ids below 101 wait 1 ms.
    Config2,
}

impl HoldUpPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" | "none" => Some(HoldUpPolicy::Zero),
            "config1" => Some(HoldUpPolicy::Config1),
            "config2" => Some(HoldUpPolicy::Config2),
            _ => None,
        }
    }
}

/// Hold-up time of `can_id` sent every `period`. An explicit value wins over the policy.
pub fn compute_holdup(
    can_id: CanId,
    period: SimTime,
    policy: HoldUpPolicy,
    explicit: Option<SimTime>,
) -> SimTime {
    if let Some(t) = explicit {
        return t;
    }
    let pct = |p: i64| SimTime(period.ticks() * p / 100);
    let id = can_id.raw();
    match policy {
        HoldUpPolicy::Zero => SimTime::ZERO,
        HoldUpPolicy::Config1 | HoldUpPolicy::Config2 => match id {
            0..=100 if policy == HoldUpPolicy::Config2 => SimTime::from_ms(1),
            0..=100 => SimTime::ZERO,
            101..=200 => pct(25),
            201..=300 => pct(50),
            _ => pct(75),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub frame: CanFrame,
    pub arrival: SimTime,
    pub holdup: SimTime,
    /// Indices of the routing destinations this record goes to.
    pub targets: Vec<usize>,
}

impl PoolEntry {
    pub fn expiry(&self) -> SimTime {
        self.arrival + self.holdup
    }
}

#[derive(Debug, Clone, Default)]
pub struct Pool {
    pub name: String,
    buffered: VecDeque<PoolEntry>,
    deadline: Option<SimTime>,
}

impl Pool {
    pub fn new(name: impl Into<String>) -> Self {
        Pool { name: name.into(), ..Default::default() }
    }

    pub fn deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn len(&self) -> usize {
        self.buffered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffered.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.buffered.iter()
    }

    /// Buffers `entry`; returns the new deadline when it moved earlier (or was set).
    pub fn insert(&mut self, entry: PoolEntry) -> Option<SimTime> {
        let candidate = entry.expiry();
        self.buffered.push_back(entry);
        match self.deadline {
            Some(d) if d <= candidate => None,
            _ => {
                self.deadline = Some(candidate);
                self.deadline
            }
        }
    }

    /// Releases every buffered entry in arrival order.
    pub fn flush(&mut self) -> Vec<PoolEntry> {
        self.deadline = None;
        self.buffered.drain(..).collect()
    }

    pub fn check_invariants(&self) -> bool {
        let min = self.buffered.iter().map(PoolEntry::expiry).min();
        min == self.deadline
    }
}

/// A flush recorded for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushRecord {
    pub time: SimTime,
    /// (message index, instance) of each released frame in arrival order.
    pub members: Vec<(u32, u64)>,
}
