//! In-memory run log used by analyses that need more than the metric vectors.

use crate::can::CanId;
use crate::ethernet::cbs::CreditPoint;
use crate::ethernet::{AvbClass, ClassTag};
use crate::ids::{BusId, DeviceId, MessageId, PortId};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Departure {
    pub port: PortId,
    pub start: SimTime,
    pub end: SimTime,
    pub class: ClassTag,
    /// Credit of the frame's AVB class when it started, scaled by `CREDIT_SCALE`.
    pub credit_at_start: Option<i128>,
    pub message: Option<(MessageId, u64)>,
    pub records: Vec<(MessageId, u64)>,
    pub wire_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanDeparture {
    pub bus: BusId,
    pub node: usize,
    pub start: SimTime,
    pub end: SimTime,
    pub id: CanId,
    pub message: MessageId,
    pub instance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub message: MessageId,
    pub instance: u64,
    pub sink: DeviceId,
    pub created: SimTime,
    pub arrived: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolInsert {
    pub device: DeviceId,
    pub pool: usize,
    pub time: SimTime,
    pub message: MessageId,
    pub instance: u64,
    pub holdup: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushedEntry {
    pub message: MessageId,
    pub instance: u64,
    pub arrival: SimTime,
    pub holdup: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushLog {
    pub device: DeviceId,
    pub pool: usize,
    pub time: SimTime,
    pub entries: Vec<FlushedEntry>,
}

/// Exact credit trajectory of one shaper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreditTrace {
    pub port: PortId,
    pub class: AvbClass,
    pub idle_slope: i64,
    pub send_slope: i64,
    pub points: Vec<CreditPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLog {
    pub departures: Vec<Departure>,
    pub can_departures: Vec<CanDeparture>,
    pub deliveries: Vec<Delivery>,
    pub pool_inserts: Vec<PoolInsert>,
    pub flushes: Vec<FlushLog>,
    pub credit_traces: Vec<CreditTrace>,
}
