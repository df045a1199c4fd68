//! CAN/Ethernet gateway: routing table, pooling buffers and transformation.

pub mod encoding;
pub mod pool;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::can::{CanFrame, CanId};
use crate::ethernet::{ClassTag, Destination, EthFrame};
use crate::ids::{BusId, PortId};
use crate::time::SimTime;

pub use encoding::{decode, encode, CanRecord, MalformedAggregate};
pub use pool::{compute_holdup, FlushRecord, HoldUpPolicy, Pool, PoolEntry};

pub const DEFAULT_GATEWAY_DELAY: SimTime = SimTime::from_us(40);
pub const CENTRAL_CAN_GATEWAY_DELAY: SimTime = SimTime::from_us(60);

/// Where a frame entered the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ingress {
    Bus(BusId),
    Port(PortId),
}

/// Header field a rule matches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKey {
    CanId(CanId),
    Class(ClassTag),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteTarget {
    Can {
        bus: BusId,
        can_id: CanId,
    },
    Eth {
        dst: Destination,
        class: ClassTag,
        /// Index into the gateway's pools; `None` forwards without waiting.
        pool: Option<usize>,
        /// Hold-up for this message in the pool.
        holdup: SimTime,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingRule {
    pub ingress: Ingress,
    pub key: MatchKey,
    pub targets: Vec<RouteTarget>,
}

/// Static routing table with O(1) lookup.
#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    rules: Vec<RoutingRule>,
    index: HashMap<(Ingress, MatchKey), usize>,
}

impl RoutingTable {
    pub fn new(rules: Vec<RoutingRule>) -> Self {
        let index = rules
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.ingress, r.key), i))
            .collect();
        RoutingTable { rules, index }
    }

    pub fn rules(&self) -> &[RoutingRule] {
        &self.rules
    }

    /// All targets of the matching rule; empty when the frame must be dropped.
    pub fn route(&self, ingress: Ingress, key: MatchKey) -> &[RouteTarget] {
        self.index
            .get(&(ingress, key))
            .map(|&i| self.rules[i].targets.as_slice())
            .unwrap_or(&[])
    }

    pub fn route_can(&self, ingress: Ingress, frame: &CanFrame) -> &[RouteTarget] {
        self.route(ingress, MatchKey::CanId(frame.id))
    }
}

/// Key used to route an Ethernet frame without embedded CAN records.
pub fn eth_match_key(frame: &EthFrame) -> MatchKey {
    MatchKey::Class(frame.class)
}

/// Turns an aggregate back into CAN frames, checking the byte encoding
/// against the carried metadata.
pub fn transform_eth_to_can(frame: &EthFrame) -> Result<Vec<CanFrame>, MalformedAggregate> {
    if frame.embedded.is_empty() {
        return Ok(Vec::new());
    }
    let records = decode(&frame.payload, frame.content_len as usize)?;
    if records.len() != frame.embedded.len() {
        return Err(MalformedAggregate::Untiled {
            used: records.len(),
            content: frame.embedded.len(),
        });
    }
    Ok(records
        .into_iter()
        .zip(&frame.embedded)
        .map(|(rec, meta)| {
            let mut f = meta.clone();
            f.id = rec.id;
            f
        })
        .collect())
}

/// Builds the Ethernet frames carrying `records`, splitting at the MTU.
pub fn aggregate_frames(
    template: &EthFrame,
    records: &[CanFrame],
) -> Vec<EthFrame> {
    let dlcs: Vec<usize> = records.iter().map(CanFrame::payload_len).collect();
    encoding::split_for_mtu(&dlcs)
        .into_iter()
        .map(|range| {
            let chunk = &records[range];
            let recs: Vec<CanRecord> = chunk
                .iter()
                .map(|f| CanRecord { id: f.id, data: f.payload().to_vec() })
                .collect();
            let (payload, content) = encode(&recs);
            let mut f = template.clone();
            f.content_len = content as u32;
            f.payload_len = payload.len() as u32;
            f.payload = payload;
            f.embedded = chunk.to_vec();
            f.creation_time = chunk.iter().map(|c| c.creation_time).min().unwrap_or(template.creation_time);
            f
        })
        .collect()
}
