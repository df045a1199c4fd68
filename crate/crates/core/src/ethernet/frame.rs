use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can::CanFrame;
use crate::ids::{DeviceId, GroupId, MessageId};
use crate::time::SimTime;

pub const MIN_ETH_PAYLOAD: u32 = 46;
pub const MAX_ETH_PAYLOAD: u32 = 1500;
/// Preamble + SFD (8), header (14), FCS (4), interframe gap (12).
pub const ETH_OVERHEAD_BYTES: u32 = 8 + 14 + 4 + 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EthError {
    #[error("Ethernet payload of {0} bytes is outside 46..=1500")]
    PayloadOutOfRange(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AvbClass {
    A,
    B,
}

impl AvbClass {
    pub fn index(self) -> usize {
        match self {
            AvbClass::A => 0,
            AvbClass::B => 1,
        }
    }
}

/// Traffic class of an Ethernet frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Tt { ct_id: u32 },
    Rc { vl_id: u32 },
    Avb { class: AvbClass, stream_id: u32 },
    Be { priority: u8 },
}

impl ClassTag {
    pub fn queue_class(self) -> QueueClass {
        match self {
            ClassTag::Tt { .. } => QueueClass::Tt,
            ClassTag::Rc { .. } => QueueClass::Rc,
            ClassTag::Avb { class: AvbClass::A, .. } => QueueClass::AvbA,
            ClassTag::Avb { class: AvbClass::B, .. } => QueueClass::AvbB,
            ClassTag::Be { .. } => QueueClass::Be,
        }
    }
}

/// The egress queue family a frame lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueueClass {
    Tt,
    Rc,
    AvbA,
    AvbB,
    Be,
}

impl QueueClass {
    pub const ALL: [QueueClass; 5] = [
        QueueClass::Tt,
        QueueClass::Rc,
        QueueClass::AvbA,
        QueueClass::AvbB,
        QueueClass::Be,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            QueueClass::Tt => "TT",
            QueueClass::Rc => "RC",
            QueueClass::AvbA => "A",
            QueueClass::AvbB => "B",
            QueueClass::Be => "BE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Unicast(DeviceId),
    Multicast(GroupId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EthFrame {
    pub src: DeviceId,
    pub dst: Destination,
    /// Payload bytes on the wire, padding included.
    pub payload_len: u32,
    /// Payload bytes before padding.
    pub content_len: u32,
    pub class: ClassTag,
    pub creation_time: SimTime,
    pub message: Option<(MessageId, u64)>,
    /// Encoded aggregate payload when the frame carries CAN records.
    pub payload: Vec<u8>,
    /// Simulation-side metadata of the carried CAN records, in payload order.
    pub embedded: Vec<CanFrame>,
}

impl EthFrame {
    pub fn new(
        src: DeviceId,
        dst: Destination,
        content_len: u32,
        class: ClassTag,
        creation_time: SimTime,
    ) -> Result<Self, EthError> {
        if content_len > MAX_ETH_PAYLOAD {
            return Err(EthError::PayloadOutOfRange(content_len));
        }
        Ok(EthFrame {
            src,
            dst,
            payload_len: content_len.max(MIN_ETH_PAYLOAD),
            content_len,
            class,
            creation_time,
            message: None,
            payload: Vec::new(),
            embedded: Vec::new(),
        })
    }

    pub fn wire_bits(&self) -> u64 {
        eth_wire_bits(self.payload_len)
    }
}

pub fn eth_wire_bits(payload_len: u32) -> u64 {
    8 * (payload_len.max(MIN_ETH_PAYLOAD) + ETH_OVERHEAD_BYTES) as u64
}

pub fn eth_frame_duration(payload_len: u32, rate: u64) -> Result<SimTime, EthError> {
    if !(MIN_ETH_PAYLOAD..=MAX_ETH_PAYLOAD).contains(&payload_len) {
        return Err(EthError::PayloadOutOfRange(payload_len));
    }
    Ok(SimTime::for_bits(eth_wire_bits(payload_len), rate))
}
