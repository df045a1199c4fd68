//! Index newtypes for the entities of a compiled network.

use serde::{Deserialize, Serialize};

macro_rules! index_id {
    ($($(#[$m:meta])* $name:ident),* $(,)?) => {$(
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(u32::try_from(i).expect("index overflow"))
            }
        }
    )*};
}

index_id!(
    /// A node, switch or gateway.
    DeviceId,
    /// A CAN bus.
    BusId,
    /// A directed Ethernet egress port (one per link end).
    PortId,
    /// An undirected Ethernet link.
    LinkId,
    MessageId,
    /// A multicast destination group.
    GroupId,
);
