//! CAN bus model: frame timing, priority arbitration and controller buffers.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BusId, DeviceId, MessageId};
use crate::time::SimTime;

pub const MAX_CAN_PAYLOAD: usize = 8;
pub const DEFAULT_CAN_BITRATE: u64 = 500_000;
/// SOF, 11-bit id, RTR, IDE, r0, DLC, CRC + delimiter, ACK slot + delimiter,
/// EOF and the 3-bit interframe space.
pub const CAN_OVERHEAD_BITS: u64 = 47;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanError {
    #[error("CAN id {0} does not fit 11 bits")]
    IdOutOfRange(u32),
    #[error("CAN payload of {0} bytes exceeds 8 bytes")]
    PayloadTooLong(usize),
}

/// Standard 11-bit identifier. Lower value wins arbitration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanId(u16);

impl CanId {
    pub const MAX: u16 = 0x7FF;

    pub fn new(id: u32) -> Result<Self, CanError> {
        if id > Self::MAX as u32 {
            return Err(CanError::IdOutOfRange(id));
        }
        Ok(CanId(id as u16))
    }

    pub fn raw(self) -> u16 {
        self.0
    }
}

impl std::fmt::Display for CanId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanFrame {
    pub id: CanId,
    dlc: u8,
    data: [u8; MAX_CAN_PAYLOAD],
    pub origin_bus: BusId,
    pub creation_time: SimTime,
    pub message: MessageId,
    pub instance: u64,
}

impl CanFrame {
    pub fn new(
        id: CanId,
        payload: &[u8],
        origin_bus: BusId,
        creation_time: SimTime,
        message: MessageId,
        instance: u64,
    ) -> Result<Self, CanError> {
        if payload.len() > MAX_CAN_PAYLOAD {
            return Err(CanError::PayloadTooLong(payload.len()));
        }
        let mut data = [0u8; MAX_CAN_PAYLOAD];
        data[..payload.len()].copy_from_slice(payload);
        Ok(CanFrame {
            id,
            dlc: payload.len() as u8,
            data,
            origin_bus,
            creation_time,
            message,
            instance,
        })
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    pub fn payload_len(&self) -> usize {
        self.dlc as usize
    }
}

/// Bits on the wire for a standard frame. With `worst_case_stuffing` the
/// stuffable region (34 + 8n bits) gets one stuff bit per four bits.
pub fn can_frame_bits(payload_len: usize, worst_case_stuffing: bool) -> u64 {
    assert!(payload_len <= MAX_CAN_PAYLOAD, "CAN payload {payload_len} > 8");
    let n = payload_len as u64;
    let base = CAN_OVERHEAD_BITS + 8 * n;
    if worst_case_stuffing {
        base + (34 + 8 * n) / 4
    } else {
        base
    }
}

pub fn can_frame_duration(payload_len: usize, bitrate: u64, worst_case_stuffing: bool) -> SimTime {
    SimTime::for_bits(can_frame_bits(payload_len, worst_case_stuffing), bitrate)
}

/// A frame waiting in some controller, as seen by the arbiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contender {
    pub id: CanId,
    /// Position of the controller on the bus. Breaks equal-id collisions.
    pub node_index: usize,
}

/// Picks the contender with the numerically smallest id; equal ids are
/// resolved in favour of the lowest node index.
pub fn arbitrate(pending: &[Contender]) -> Option<usize> {
    pending
        .iter()
        .enumerate()
        .min_by_key(|(_, c)| (c.id, c.node_index))
        .map(|(i, _)| i)
}

/// Transmit buffer policy of a CAN controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxBufferMode {
    /// One FIFO per id; nothing is overwritten.
    #[default]
    Queue,
    /// One message object per id; a newer frame replaces a pending older one.
    Overwrite,
}

/// Transmit side of one controller attached to a bus.
#[derive(Debug, Clone, Default)]
pub struct TxBuffer {
    mode: TxBufferMode,
    objects: BTreeMap<CanId, VecDeque<CanFrame>>,
    overwritten: u64,
}

impl TxBuffer {
    pub fn new(mode: TxBufferMode) -> Self {
        TxBuffer {
            mode,
            ..Default::default()
        }
    }

    pub fn push(&mut self, frame: CanFrame) {
        let slot = self.objects.entry(frame.id).or_default();
        if self.mode == TxBufferMode::Overwrite && !slot.is_empty() {
            slot.clear();
            self.overwritten += 1;
        }
        slot.push_back(frame);
    }

    /// The frame this controller would offer in the next arbitration round.
    pub fn head(&self) -> Option<&CanFrame> {
        self.objects.values().next().and_then(|q| q.front())
    }

    pub fn pop_head(&mut self) -> Option<CanFrame> {
        let (&id, q) = self.objects.iter_mut().next()?;
        let f = q.pop_front();
        if q.is_empty() {
            self.objects.remove(&id);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.objects.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn overwritten(&self) -> u64 {
        self.overwritten
    }
}

/// Runtime state of one bus.
#[derive(Debug, Clone)]
pub struct CanBus {
    pub id: BusId,
    pub bitrate: u64,
    pub worst_case_stuffing: bool,
    pub attached: Vec<DeviceId>,
    pub controllers: Vec<TxBuffer>,
    pub busy_until: SimTime,
    pub in_flight: Option<(usize, CanFrame)>,
}

impl CanBus {
    pub fn new(
        id: BusId,
        bitrate: u64,
        worst_case_stuffing: bool,
        attached: Vec<DeviceId>,
        modes: &[TxBufferMode],
    ) -> Self {
        assert!(bitrate > 0);
        assert_eq!(attached.len(), modes.len());
        CanBus {
            id,
            bitrate,
            worst_case_stuffing,
            controllers: modes.iter().map(|m| TxBuffer::new(*m)).collect(),
            attached,
            busy_until: SimTime::ZERO,
            in_flight: None,
        }
    }

    pub fn node_index(&self, dev: DeviceId) -> Option<usize> {
        self.attached.iter().position(|d| *d == dev)
    }

    pub fn is_idle(&self, now: SimTime) -> bool {
        self.in_flight.is_none() && now >= self.busy_until
    }

    pub fn enqueue(&mut self, node_index: usize, frame: CanFrame) {
        self.controllers[node_index].push(frame);
    }

    pub fn frame_duration(&self, frame: &CanFrame) -> SimTime {
        can_frame_duration(frame.payload_len(), self.bitrate, self.worst_case_stuffing)
    }

    pub fn frame_bits(&self, frame: &CanFrame) -> u64 {
        can_frame_bits(frame.payload_len(), self.worst_case_stuffing)
    }

    /// Runs arbitration if the bus is idle; the winner is removed from its
    /// controller and put on the wire. Returns the completion time.
    pub fn try_start(&mut self, now: SimTime) -> Option<SimTime> {
        if !self.is_idle(now) {
            return None;
        }
        let contenders: Vec<(usize, Contender)> = self
            .controllers
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.head().map(|f| (i, Contender { id: f.id, node_index: i })))
            .collect();
        let plain: Vec<Contender> = contenders.iter().map(|(_, c)| *c).collect();
        let winner = arbitrate(&plain)?;
        let node = contenders[winner].0;
        let frame = self.controllers[node].pop_head().expect("head exists");
        let done = now + self.frame_duration(&frame);
        self.busy_until = done;
        self.in_flight = Some((node, frame));
        Some(done)
    }

    /// Ends the current transmission, returning the sending node index and frame.
    pub fn complete(&mut self) -> (usize, CanFrame) {
        self.in_flight.take().expect("no frame in flight")
    }

    pub fn pending(&self) -> usize {
        self.controllers.iter().map(TxBuffer::len).sum()
    }
}
