//! Discrete-event simulation of in-vehicle networks mixing CAN buses and
//! switched Ethernet with time-triggered, rate-constrained, AVB and
//! best-effort traffic.

pub mod can;
pub mod config;
pub mod ethernet;
pub mod gateway;
pub mod ids;
pub mod kernel;
pub mod metrics;
pub mod sim;
pub mod time;

pub use config::NetworkConfig;
pub use ids::{BusId, DeviceId, GroupId, LinkId, MessageId, PortId};
pub use kernel::{Kernel, KernelError, Oscillator};
pub use metrics::MetricStore;
pub use sim::{RunResult, SimError, Simulation};
pub use time::SimTime;
