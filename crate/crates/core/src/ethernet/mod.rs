//! Switched full-duplex Ethernet with TT, RC, AVB and best-effort traffic.

pub mod bag;
pub mod cbs;
pub mod frame;
pub mod port;
pub mod tdma;

pub use bag::{bag_gate, BagState};
pub use cbs::{cbs_update, CbsPhase, CreditPoint, CreditState};
pub use frame::{
    eth_frame_duration, eth_wire_bits, AvbClass, ClassTag, Destination, EthError, EthFrame, QueueClass,
    MAX_ETH_PAYLOAD, MIN_ETH_PAYLOAD,
};
pub use port::{EgressPort, EnqueueOutcome, PortParams, StartOutcome};
pub use tdma::{tt_receive_check, PortSchedule, TdmaSchedule, TdmaWindow, TtCheck};

/// Default store-and-forward processing delay of a switch.
pub const DEFAULT_SWITCH_DELAY: crate::time::SimTime = crate::time::SimTime::from_us(8);
