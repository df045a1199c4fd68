//! Compiled network description consumed by the simulator.
//!
//! All collections are index-addressed vectors so the JSON form has a stable
//! key and element order.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can::{CanId, TxBufferMode, DEFAULT_CAN_BITRATE};
use crate::ethernet::port::DEFAULT_QUEUE_CAPACITY;
use crate::ethernet::{ClassTag, Destination, QueueClass, TdmaSchedule, DEFAULT_SWITCH_DELAY};
use crate::gateway::{RoutingRule, DEFAULT_GATEWAY_DELAY};
use crate::ids::{BusId, DeviceId, GroupId, LinkId, MessageId, PortId};
use crate::time::{parse_rate, parse_time, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Node,
    Switch,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardEntry {
    pub dst: Destination,
    pub ports: Vec<PortId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub name: String,
    pub kind: DeviceKind,
    /// Clock drift of the device oscillator in ppm.
    pub drift_ppm: Ratio<i64>,
    /// Store-and-forward delay (switches).
    pub hardware_delay: SimTime,
    /// Applied once per traversal on the egress side (gateways).
    pub processing_delay: SimTime,
    pub can_buffer: TxBufferMode,
    /// Egress ports owned by this device.
    pub ports: Vec<PortId>,
    pub buses: Vec<BusId>,
    pub forwarding: Vec<ForwardEntry>,
    pub routing: Vec<RoutingRule>,
    pub pools: Vec<String>,
}

impl DeviceConfig {
    pub fn new(name: impl Into<String>, kind: DeviceKind) -> Self {
        DeviceConfig {
            name: name.into(),
            kind,
            drift_ppm: Ratio::from_integer(0),
            hardware_delay: DEFAULT_SWITCH_DELAY,
            processing_delay: DEFAULT_GATEWAY_DELAY,
            can_buffer: TxBufferMode::default(),
            ports: Vec::new(),
            buses: Vec::new(),
            forwarding: Vec::new(),
            routing: Vec::new(),
            pools: Vec::new(),
        }
    }

    pub fn egress_for(&self, dst: Destination) -> &[PortId] {
        self.forwarding
            .iter()
            .find(|e| e.dst == dst)
            .map(|e| e.ports.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusConfig {
    pub name: String,
    pub segment: String,
    pub bitrate: u64,
    pub stuffing: bool,
    /// Attached devices; the position is the arbitration tie-break index.
    pub attached: Vec<DeviceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub name: String,
    pub segment: String,
    pub rate: u64,
    pub ends: [DeviceId; 2],
    /// `ports[i]` transmits from `ends[i]` towards the other end.
    pub ports: [PortId; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortConfig {
    pub owner: DeviceId,
    pub peer: DeviceId,
    pub link: LinkId,
    pub rate: u64,
    pub capacity: usize,
    /// Reserved idle slope of AVB class A and B in bit/s.
    pub idle_slope: [u64; 2],
    pub bags: BTreeMap<u32, SimTime>,
    pub rc_priority: BTreeMap<u32, u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    pub members: Vec<DeviceId>,
}

/// How the sender puts one instance of a message on the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emission {
    Can {
        bus: BusId,
        can_id: CanId,
    },
    Eth {
        dst: Destination,
        class: ClassTag,
        /// Set when the frame carries a CAN record for a downstream gateway.
        can_id: Option<CanId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageConfig {
    pub name: String,
    pub sender: DeviceId,
    pub receivers: Vec<DeviceId>,
    pub payload: u32,
    pub period: SimTime,
    pub offset: SimTime,
    pub emissions: Vec<Emission>,
    /// Gateways on the path, in path order.
    pub gateways: Vec<DeviceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingOptions {
    pub queues: bool,
    pub credit: bool,
    pub tx: bool,
    pub stations: bool,
    /// Keep the in-memory run log (departures, pool activity).
    pub trace: bool,
}

impl Default for RecordingOptions {
    fn default() -> Self {
        RecordingOptions { queues: true, credit: true, tx: true, stations: false, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settings {
    pub horizon: SimTime,
    pub seed: u64,
    pub tt_tolerance: SimTime,
    pub class_order: Vec<QueueClass>,
    pub queue_capacity: usize,
    pub recording: RecordingOptions,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            horizon: SimTime::from_secs(1),
            seed: 0,
            tt_tolerance: SimTime::ZERO,
            class_order: crate::ethernet::port::DEFAULT_CLASS_ORDER.to_vec(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            recording: RecordingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct NetworkConfig {
    pub name: String,
    pub devices: Vec<DeviceConfig>,
    pub buses: Vec<BusConfig>,
    pub links: Vec<LinkConfig>,
    pub ports: Vec<PortConfig>,
    pub groups: Vec<GroupConfig>,
    pub messages: Vec<MessageConfig>,
    pub schedule: TdmaSchedule,
    pub settings: Settings,
    /// Verbatim inline ini blocks, applied as overrides before a run.
    pub inline_ini: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverrideError {
    #[error("override `{0}` is not of the form key=value")]
    Syntax(String),
    #[error("bad value for `{key}`: {reason}")]
    Value { key: String, reason: String },
}

/// Result of applying one override layer.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct OverrideReport {
    pub applied: Vec<String>,
    /// Keys that matched nothing.
    pub unknown: Vec<String>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Parses `100ppm`, `-12.5ppm` or a bare number into a ppm ratio.
pub fn parse_ppm(s: &str) -> Option<Ratio<i64>> {
    let s = s.trim();
    let num = s.strip_suffix("ppm").unwrap_or(s).trim();
    let (neg, digits) = match num.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, num.strip_prefix('+').unwrap_or(num)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 9 {
        return None;
    }
    let den = 10i64.pow(frac.len() as u32);
    let value: i64 = format!("{int}{frac}").parse().ok()?;
    let r = Ratio::new(value, den);
    Some(if neg { -r } else { r })
}

impl NetworkConfig {
    pub fn device_by_name(&self, name: &str) -> Option<DeviceId> {
        self.devices.iter().position(|d| d.name == name).map(DeviceId::from)
    }

    pub fn message_by_name(&self, name: &str) -> Option<MessageId> {
        self.messages.iter().position(|m| m.name == name).map(MessageId::from)
    }

    pub fn bus_by_name(&self, name: &str) -> Option<BusId> {
        self.buses.iter().position(|b| b.name == name).map(BusId::from)
    }

    pub fn device(&self, id: DeviceId) -> &DeviceConfig {
        &self.devices[id.index()]
    }

    pub fn group(&self, id: GroupId) -> &GroupConfig {
        &self.groups[id.index()]
    }

    /// Whether `dev` is addressed by `dst`.
    pub fn is_addressed(&self, dst: Destination, dev: DeviceId) -> bool {
        match dst {
            Destination::Unicast(d) => d == dev,
            Destination::Multicast(g) => self.group(g).members.contains(&dev),
        }
    }

    /// Name of the egress port as used in metric series, e.g. `port0-l1`
    /// for the first port of the owner, sitting on link `l1`.
    pub fn port_label(&self, port: PortId) -> String {
        let pc = &self.ports[port.index()];
        let owner = pc.owner;
        let local = self.devices[owner.index()]
            .ports
            .iter()
            .position(|p| *p == port)
            .unwrap_or(0);
        format!("port{local}-{}", self.links[pc.link.index()].name)
    }

    /// Applies every inline ini block in order.
    pub fn apply_inline_ini(&mut self) -> Result<OverrideReport, OverrideError> {
        let blocks = self.inline_ini.clone();
        let mut report = OverrideReport::default();
        for block in &blocks {
            for line in block.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() || line.starts_with('[') || line.starts_with(';') {
                    continue;
                }
                let r = self.apply_override(line)?;
                report.applied.extend(r.applied);
                report.unknown.extend(r.unknown);
            }
        }
        Ok(report)
    }

    /// Applies one `key = value` override. Keys are `settings.<field>` or
    /// dotted paths `[<network>.]<entity>.<param>`.
    pub fn apply_override(&mut self, text: &str) -> Result<OverrideReport, OverrideError> {
        let (key, value) = text
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim().trim_matches('"')))
            .ok_or_else(|| OverrideError::Syntax(text.to_string()))?;
        if key.is_empty() {
            return Err(OverrideError::Syntax(text.to_string()));
        }
        let bad = |reason: &str| OverrideError::Value { key: key.to_string(), reason: reason.to_string() };
        let time = |v: &str| parse_time(v).map_err(|e| bad(&e.to_string()));
        let boolean = |v: &str| parse_bool(v).ok_or_else(|| bad("expected a boolean"));
        let mut report = OverrideReport::default();

        let path = key.strip_prefix(&format!("{}.", self.name)).unwrap_or(key);
        let (entity, param) = match path.rsplit_once('.') {
            Some(x) => x,
            None => {
                report.unknown.push(key.to_string());
                return Ok(report);
            }
        };

        let hit = if entity == "settings" {
            let s = &mut self.settings;
            match param {
                "horizon" => s.horizon = time(value)?,
                "seed" => s.seed = value.parse().map_err(|_| bad("expected an integer"))?,
                "ttTolerance" => s.tt_tolerance = time(value)?,
                "queueCapacity" => s.queue_capacity = value.parse().map_err(|_| bad("expected an integer"))?,
                "recordQueues" => s.recording.queues = boolean(value)?,
                "recordCredit" => s.recording.credit = boolean(value)?,
                "recordTx" => s.recording.tx = boolean(value)?,
                "recordStations" => s.recording.stations = boolean(value)?,
                _ => {
                    report.unknown.push(key.to_string());
                    return Ok(report);
                }
            }
            true
        } else if let Some(d) = self.device_by_name(entity) {
            let dev = &mut self.devices[d.index()];
            match param {
                "hardwareDelay" => dev.hardware_delay = time(value)?,
                "processingDelay" => dev.processing_delay = time(value)?,
                "drift" => dev.drift_ppm = parse_ppm(value).ok_or_else(|| bad("expected ppm"))?,
                "canBuffer" => {
                    dev.can_buffer = match value {
                        "queue" => TxBufferMode::Queue,
                        "overwrite" => TxBufferMode::Overwrite,
                        _ => return Err(bad("expected queue or overwrite")),
                    }
                }
                "queueCapacity" => {
                    let cap: usize = value.parse().map_err(|_| bad("expected an integer"))?;
                    let ports = dev.ports.clone();
                    for p in ports {
                        self.ports[p.index()].capacity = cap;
                    }
                }
                _ => {
                    report.unknown.push(key.to_string());
                    return Ok(report);
                }
            }
            true
        } else if let Some(b) = self.bus_by_name(entity) {
            let bus = &mut self.buses[b.index()];
            match param {
                "stuffing" => bus.stuffing = boolean(value)?,
                "bandwidth" => bus.bitrate = parse_rate(value).map_err(|e| bad(&e.to_string()))?,
                _ => {
                    report.unknown.push(key.to_string());
                    return Ok(report);
                }
            }
            true
        } else if let Some(m) = self.message_by_name(entity) {
            let msg = &mut self.messages[m.index()];
            match param {
                "offset" => msg.offset = time(value)?,
                _ => {
                    report.unknown.push(key.to_string());
                    return Ok(report);
                }
            }
            true
        } else {
            false
        };
        if hit {
            report.applied.push(key.to_string());
        } else {
            report.unknown.push(key.to_string());
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub const DEFAULT_BUS_BITRATE: u64 = DEFAULT_CAN_BITRATE;

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        let mut c = NetworkConfig { name: "net".into(), ..Default::default() };
        c.devices.push(DeviceConfig::new("s1", DeviceKind::Switch));
        c.buses.push(BusConfig {
            name: "cb1".into(),
            segment: "canbus".into(),
            bitrate: 500_000,
            stuffing: false,
            attached: vec![],
        });
        c.inline_ini.push("record-eventlog = false\nnet.s1.hardwareDelay = 5us\n".into());
        c
    }

    #[test]
    fn ppm_parsing() {
        assert_eq!(parse_ppm("100ppm"), Some(Ratio::from_integer(100)));
        assert_eq!(parse_ppm("-12.5ppm"), Some(Ratio::new(-25, 2)));
        assert_eq!(parse_ppm("0"), Some(Ratio::from_integer(0)));
        assert_eq!(parse_ppm("fast"), None);
    }

    #[test]
    fn inline_ini_overrides_and_reports_unknown_keys() {
        let mut c = tiny();
        let r = c.apply_inline_ini().unwrap();
        assert_eq!(r.unknown, vec!["record-eventlog".to_string()]);
        assert_eq!(c.devices[0].hardware_delay, SimTime::from_us(5));
        c.apply_override("cb1.stuffing=true").unwrap();
        assert!(c.buses[0].stuffing);
        c.apply_override("settings.horizon = 2s").unwrap();
        assert_eq!(c.settings.horizon, SimTime::from_secs(2));
        assert!(c.apply_override("settings.horizon = soon").is_err());
        assert!(c.apply_override("nonsense").is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = tiny();
        let back = NetworkConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
