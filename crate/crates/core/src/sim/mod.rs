//! Event-driven execution of a compiled [`NetworkConfig`].

mod log;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::can::{CanBus, CanFrame, CanId, TxBufferMode};
use crate::config::{DeviceKind, Emission, NetworkConfig};
use crate::ethernet::port::PortParams;
use crate::ethernet::{
    tt_receive_check, AvbClass, ClassTag, Destination, EgressPort, EthFrame, QueueClass, StartOutcome, TtCheck,
};
use crate::gateway::{aggregate_frames, transform_eth_to_can, Ingress, MatchKey, Pool, PoolEntry, RouteTarget, RoutingTable};
use crate::ids::{BusId, DeviceId, MessageId, PortId};
use crate::kernel::{EventHandle, EventKind, Kernel, KernelError, ModuleId, Oscillator, RunSummary};
use crate::metrics::{record_queue, MetricStore, QueueEvent};
use crate::metrics::analysis::jitter;
use crate::time::SimTime;

pub use log::{CanDeparture, CreditTrace, Delivery, Departure, FlushLog, FlushedEntry, PoolInsert, RunLog};

/// Scalar on the network module holding the simulated time span.
pub const SIMULATED_TIME: &str = "simulatedTime";

/// Marks CAN records created on Ethernet nodes, which never crossed a bus.
pub const NO_BUS: BusId = BusId(u32::MAX);

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("inconsistent configuration: {0}")]
    Config(String),
    #[error("horizon must be positive")]
    ZeroHorizon,
}

#[derive(Debug)]
enum Ev {
    Source(MessageId),
    CanKick(BusId),
    CanDone(BusId),
    PortKick(PortId),
    PortWake(PortId),
    PortDone(PortId),
    SwitchIn { dev: DeviceId, via: PortId, frame: EthFrame },
    PoolDeadline { dev: DeviceId, pool: usize },
    PoolFlush { dev: DeviceId, pool: usize },
    GwEth { dev: DeviceId, frames: Vec<EthFrame> },
    GwCan { dev: DeviceId, bus: BusId, frame: CanFrame },
}

impl EventKind for Ev {
    fn kind(&self) -> &'static str {
        match self {
            Ev::Source(_) => "source",
            Ev::CanKick(_) => "can-kick",
            Ev::CanDone(_) => "can-done",
            Ev::PortKick(_) => "port-kick",
            Ev::PortWake(_) => "port-wake",
            Ev::PortDone(_) => "port-done",
            Ev::SwitchIn { .. } => "switch-in",
            Ev::PoolDeadline { .. } => "pool-deadline",
            Ev::PoolFlush { .. } => "pool-flush",
            Ev::GwEth { .. } => "gw-eth",
            Ev::GwCan { .. } => "gw-can",
        }
    }
}

/// Frames sent and dropped on the links and buses of one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSummary {
    pub segment: String,
    pub frames_sent: u64,
    /// Transmissions accepted by the receiving end.
    pub frames_received: u64,
    pub frames_dropped: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub summary: RunSummary,
    pub metrics: MetricStore,
    pub log: RunLog,
    pub segments: Vec<SegmentSummary>,
    /// Per message: (instances released, latency samples recorded).
    pub messages: Vec<(String, u64, u64)>,
    pub trace_digest: Option<String>,
}

struct GatewayRt {
    table: RoutingTable,
    pools: Vec<Pool>,
    timers: Vec<Option<EventHandle>>,
    /// (destination, class) pairs pool entries refer to by index.
    eth_targets: Vec<(Destination, ClassTag)>,
}

struct State {
    cfg: NetworkConfig,
    buses: Vec<CanBus>,
    bus_kick: Vec<bool>,
    bus_tx: Vec<u64>,
    ports: Vec<EgressPort>,
    port_kick: Vec<bool>,
    port_wake: Vec<Option<SimTime>>,
    port_tx: Vec<u64>,
    port_rx: Vec<u64>,
    reverse_port: Vec<PortId>,
    forwarding: Vec<HashMap<Destination, Vec<PortId>>>,
    gateways: Vec<Option<GatewayRt>>,
    oscillators: Vec<Oscillator>,
    next_instance: Vec<u64>,
    samples: Vec<u64>,
    latencies: BTreeMap<(MessageId, DeviceId), Vec<SimTime>>,
    dev_module: Vec<String>,
    bus_module: Vec<String>,
    port_label: Vec<String>,
    msg_receivers: Vec<Vec<DeviceId>>,
    metrics: MetricStore,
    log: RunLog,
}

pub struct Simulation {
    kernel: Kernel<Ev>,
    state: State,
}

fn dev_target(d: DeviceId) -> ModuleId {
    ModuleId(d.0)
}

fn bus_target(b: BusId) -> ModuleId {
    ModuleId(0x8000_0000 | b.0)
}

fn can_payload(msg: MessageId, instance: u64, len: usize) -> Vec<u8> {
    (0..len).map(|i| (instance as u8).wrapping_add(msg.0 as u8).wrapping_add(i as u8)).collect()
}

impl Simulation {
    pub fn new(cfg: NetworkConfig) -> Result<Self, SimError> {
        if cfg.settings.horizon <= SimTime::ZERO {
            return Err(SimError::ZeroHorizon);
        }
        cfg.schedule
            .check_invariants()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let bad = |m: String| SimError::Config(m);
        let rec = cfg.settings.recording;

        let buses = cfg
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let modes: Vec<TxBufferMode> = b
                    .attached
                    .iter()
                    .map(|d| cfg.devices[d.index()].can_buffer)
                    .collect();
                CanBus::new(BusId::from(i), b.bitrate, b.stuffing, b.attached.clone(), &modes)
            })
            .collect::<Vec<_>>();

        let mut ports = Vec::with_capacity(cfg.ports.len());
        for (i, p) in cfg.ports.iter().enumerate() {
            let id = PortId::from(i);
            let mut params = PortParams::new(p.rate);
            params.capacity = p.capacity;
            params.idle_slope = p.idle_slope;
            params.class_order = cfg.settings.class_order.clone();
            params.bags = p.bags.clone();
            params.rc_priority = p.rc_priority.clone();
            params.record_credit = rec.credit && p.idle_slope.iter().any(|s| *s > 0);
            ports.push(EgressPort::new(id, params, cfg.schedule.for_port(id)));
        }

        let mut reverse_port = vec![PortId(u32::MAX); cfg.ports.len()];
        for l in &cfg.links {
            reverse_port[l.ports[0].index()] = l.ports[1];
            reverse_port[l.ports[1].index()] = l.ports[0];
        }

        let forwarding = cfg
            .devices
            .iter()
            .map(|d| d.forwarding.iter().map(|e| (e.dst, e.ports.clone())).collect())
            .collect();

        let mut gateways = Vec::with_capacity(cfg.devices.len());
        for d in &cfg.devices {
            if d.kind != DeviceKind::Gateway {
                gateways.push(None);
                continue;
            }
            let mut eth_targets = Vec::new();
            for r in &d.routing {
                for t in &r.targets {
                    if let RouteTarget::Eth { dst, class, pool, .. } = t {
                        if let Some(p) = pool {
                            if *p >= d.pools.len() {
                                return Err(bad(format!("{} references missing pool {p}", d.name)));
                            }
                        }
                        if !eth_targets.contains(&(*dst, *class)) {
                            eth_targets.push((*dst, *class));
                        }
                    }
                }
            }
            gateways.push(Some(GatewayRt {
                table: RoutingTable::new(d.routing.clone()),
                pools: d.pools.iter().map(Pool::new).collect(),
                timers: vec![None; d.pools.len()],
                eth_targets,
            }));
        }

        let net = &cfg.name;
        let dev_module = cfg.devices.iter().map(|d| format!("{net}.{}", d.name)).collect();
        let bus_module = cfg.buses.iter().map(|b| format!("{net}.{}", b.name)).collect();
        let port_label = (0..cfg.ports.len()).map(|i| cfg.port_label(PortId::from(i))).collect();
        let oscillators: Vec<Oscillator> = cfg.devices.iter().map(|d| Oscillator::with_drift(d.drift_ppm)).collect();
        let msg_receivers = cfg.messages.iter().map(|m| m.receivers.clone()).collect();

        let mut kernel = Kernel::new(cfg.settings.seed);
        for (i, m) in cfg.messages.iter().enumerate() {
            if m.period <= SimTime::ZERO {
                return Err(bad(format!("message {} has a non-positive period", m.name)));
            }
            let osc: &Oscillator = &oscillators[m.sender.index()];
            let first = osc.local_to_ideal(m.offset);
            kernel.schedule(first, dev_target(m.sender), Ev::Source(MessageId::from(i)))?;
        }

        let n_msgs = cfg.messages.len();
        let state = State {
            bus_kick: vec![false; buses.len()],
            bus_tx: vec![0; buses.len()],
            buses,
            port_kick: vec![false; ports.len()],
            port_wake: vec![None; ports.len()],
            port_tx: vec![0; ports.len()],
            port_rx: vec![0; ports.len()],
            ports,
            reverse_port,
            forwarding,
            gateways,
            oscillators,
            next_instance: vec![0; n_msgs],
            samples: vec![0; n_msgs],
            latencies: BTreeMap::new(),
            dev_module,
            bus_module,
            port_label,
            msg_receivers,
            metrics: MetricStore::new(),
            log: RunLog::default(),
            cfg,
        };
        Ok(Simulation { kernel, state })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.state.cfg
    }

    pub fn enable_trace_digest(&mut self) {
        self.kernel.enable_trace_digest();
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    /// Advances to `t`; may be called repeatedly with increasing times.
    pub fn run_until(&mut self, t: SimTime) -> Result<RunSummary, SimError> {
        let state = &mut self.state;
        Ok(self.kernel.run_until(t, |k, ev| state.handle(k, ev))?)
    }

    /// Runs to the configured horizon and collects the results.
    pub fn run(mut self) -> Result<RunResult, SimError> {
        let horizon = self.state.cfg.settings.horizon;
        self.run_until(horizon)?;
        Ok(self.finish())
    }

    pub fn finish(mut self) -> RunResult {
        let now = self.kernel.now();
        let summary = RunSummary { events_dispatched: self.kernel.total_dispatched(), final_time: now };
        let trace_digest = self.kernel.trace_digest();
        self.state.finalize(now);
        let s = self.state;
        let mut segments: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
        for l in &s.cfg.links {
            let e = segments.entry(l.segment.clone()).or_default();
            for p in l.ports {
                e.0 += s.port_tx[p.index()];
                e.1 += s.port_rx[p.index()];
                e.2 += QueueClass::ALL.iter().map(|c| s.ports[p.index()].drops(*c)).sum::<u64>();
            }
        }
        for (i, b) in s.cfg.buses.iter().enumerate() {
            let e = segments.entry(b.segment.clone()).or_default();
            e.0 += s.bus_tx[i];
            e.1 += s.bus_tx[i];
        }
        let messages = s
            .cfg
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.clone(), s.next_instance[i], s.samples[i]))
            .collect();
        RunResult {
            summary,
            metrics: s.metrics,
            log: s.log,
            segments: segments
                .into_iter()
                .map(|(segment, (frames_sent, frames_received, frames_dropped))| SegmentSummary {
                    segment,
                    frames_sent,
                    frames_received,
                    frames_dropped,
                })
                .collect(),
            messages,
            trace_digest,
        }
    }
}

impl State {
    fn handle(&mut self, k: &mut Kernel<Ev>, ev: crate::kernel::Event<Ev>) {
        let now = ev.time;
        match ev.payload {
            Ev::Source(m) => self.on_source(k, now, m),
            Ev::CanKick(b) => self.on_can_kick(k, now, b),
            Ev::CanDone(b) => self.on_can_done(k, now, b),
            Ev::PortKick(p) => self.on_port_kick(k, now, p),
            Ev::PortWake(p) => {
                if self.port_wake[p.index()] == Some(now) {
                    self.port_wake[p.index()] = None;
                }
                self.kick_port(k, p);
            }
            Ev::PortDone(p) => self.on_port_done(k, now, p),
            Ev::SwitchIn { dev, via, frame } => self.on_switch_in(k, now, dev, via, frame),
            Ev::PoolDeadline { dev, pool } => {
                if let Some(gw) = self.gateways[dev.index()].as_mut() {
                    gw.timers[pool] = None;
                }
                k.schedule_in(SimTime::ZERO, dev_target(dev), Ev::PoolFlush { dev, pool });
            }
            Ev::PoolFlush { dev, pool } => self.on_pool_flush(k, now, dev, pool),
            Ev::GwEth { dev, frames } => {
                for f in frames {
                    self.send_eth(k, now, dev, f);
                }
            }
            Ev::GwCan { dev, bus, frame } => {
                let b = &mut self.buses[bus.index()];
                match b.node_index(dev) {
                    Some(i) => {
                        b.enqueue(i, frame);
                        self.kick_bus(k, bus);
                    }
                    None => self.metrics.add_scalar(&self.dev_module[dev.index()], "routeDrops", 1.0, "frames"),
                }
            }
        }
    }

    fn kick_bus(&mut self, k: &mut Kernel<Ev>, b: BusId) {
        if !self.bus_kick[b.index()] {
            self.bus_kick[b.index()] = true;
            k.schedule_in(SimTime::ZERO, bus_target(b), Ev::CanKick(b));
        }
    }

    fn kick_port(&mut self, k: &mut Kernel<Ev>, p: PortId) {
        if !self.port_kick[p.index()] {
            self.port_kick[p.index()] = true;
            let owner = self.cfg.ports[p.index()].owner;
            k.schedule_in(SimTime::ZERO, dev_target(owner), Ev::PortKick(p));
        }
    }

    fn on_source(&mut self, k: &mut Kernel<Ev>, now: SimTime, m: MessageId) {
        let msg = &self.cfg.messages[m.index()];
        let instance = self.next_instance[m.index()];
        self.next_instance[m.index()] += 1;
        let sender = msg.sender;
        let next_local = msg.offset + SimTime(msg.period.ticks() * (instance as i64 + 1));
        let next = self.oscillators[sender.index()].local_to_ideal(next_local).max(now);
        k.schedule(next, dev_target(sender), Ev::Source(m)).expect("source times advance");

        let payload = msg.payload;
        for em in msg.emissions.clone() {
            match em {
                Emission::Can { bus, can_id } => {
                    let data = can_payload(m, instance, payload as usize);
                    let frame = CanFrame::new(can_id, &data, bus, now, m, instance).expect("validated CAN payload");
                    let b = &mut self.buses[bus.index()];
                    if let Some(i) = b.node_index(sender) {
                        b.enqueue(i, frame);
                        self.kick_bus(k, bus);
                    }
                }
                Emission::Eth { dst, class, can_id } => {
                    let frame = match can_id {
                        Some(id) => {
                            let data = can_payload(m, instance, payload as usize);
                            let rec = CanFrame::new(id, &data, NO_BUS, now, m, instance).expect("validated CAN payload");
                            let template = EthFrame::new(sender, dst, 0, class, now).expect("empty frame");
                            aggregate_frames(&template, &[rec]).pop().expect("one record")
                        }
                        None => {
                            let mut f = EthFrame::new(sender, dst, payload, class, now).expect("validated payload");
                            f.message = Some((m, instance));
                            f
                        }
                    };
                    self.send_eth(k, now, sender, frame);
                }
            }
        }
    }

    fn enqueue_port(&mut self, k: &mut Kernel<Ev>, now: SimTime, p: PortId, frame: EthFrame) {
        let out = self.ports[p.index()].enqueue(now, frame);
        let owner = self.cfg.ports[p.index()].owner;
        let queue = format!("{},{}", self.port_label[p.index()], out.class.label());
        if !out.accepted {
            record_queue(&mut self.metrics, &self.dev_module[owner.index()], &queue, now, QueueEvent::Drop, out.occupancy);
            return;
        }
        if self.cfg.settings.recording.queues {
            record_queue(&mut self.metrics, &self.dev_module[owner.index()], &queue, now, QueueEvent::Enqueue, out.occupancy);
        }
        self.kick_port(k, p);
    }

    fn on_port_kick(&mut self, k: &mut Kernel<Ev>, now: SimTime, p: PortId) {
        self.port_kick[p.index()] = false;
        let owner = self.cfg.ports[p.index()].owner;
        match self.ports[p.index()].try_start(now) {
            StartOutcome::Started { class, done } => {
                let port = &self.ports[p.index()];
                if self.cfg.settings.recording.queues {
                    let queue = format!("{},{}", self.port_label[p.index()], class.label());
                    record_queue(
                        &mut self.metrics,
                        &self.dev_module[owner.index()],
                        &queue,
                        now,
                        QueueEvent::Dequeue,
                        port.occupancy(class),
                    );
                }
                if self.cfg.settings.recording.trace {
                    let f = port.in_flight().expect("started");
                    let credit = match f.class {
                        ClassTag::Avb { class, .. } => Some(port.shaper(class).credit_at(now)),
                        _ => None,
                    };
                    self.log.departures.push(Departure {
                        port: p,
                        start: now,
                        end: done,
                        class: f.class,
                        credit_at_start: credit,
                        message: f.message,
                        records: f.embedded.iter().map(|c| (c.message, c.instance)).collect(),
                        wire_bits: f.wire_bits(),
                    });
                }
                k.schedule(done, dev_target(owner), Ev::PortDone(p)).expect("future completion");
            }
            StartOutcome::Blocked { wake: Some(t) } => {
                let slot = &mut self.port_wake[p.index()];
                if slot.is_none_or(|w| t < w || w < now) {
                    *slot = Some(t);
                    k.schedule(t, dev_target(owner), Ev::PortWake(p)).expect("future wake");
                }
            }
            StartOutcome::Blocked { wake: None } | StartOutcome::Busy => {}
        }
    }

    fn on_port_done(&mut self, k: &mut Kernel<Ev>, now: SimTime, p: PortId) {
        let (_, frame) = self.ports[p.index()].finish(now);
        let pc = &self.cfg.ports[p.index()];
        let (owner, peer) = (pc.owner, pc.peer);
        let bits = frame.wire_bits();
        self.port_tx[p.index()] += 1;
        let module = &self.dev_module[owner.index()];
        let label = &self.port_label[p.index()];
        self.metrics.add_scalar(module, &format!("txBits[{label}]"), bits as f64, "bit");
        if self.cfg.settings.recording.tx {
            self.metrics.record(module, &format!("txBits[{label}]"), now, bits as f64);
        }
        self.kick_port(k, p);

        if let ClassTag::Tt { ct_id } = frame.class {
            let sched = self.ports[p.index()].schedule();
            if tt_receive_check(ct_id, now, sched, self.cfg.settings.tt_tolerance) == TtCheck::Violation {
                self.metrics.add_scalar(&self.dev_module[peer.index()], "ttViolations", 1.0, "frames");
                return;
            }
        }
        self.port_rx[p.index()] += 1;
        match self.cfg.devices[peer.index()].kind {
            DeviceKind::Switch => {
                let delay = self.cfg.devices[peer.index()].hardware_delay;
                k.schedule_in(delay, dev_target(peer), Ev::SwitchIn { dev: peer, via: p, frame });
            }
            DeviceKind::Node => self.receive_eth(now, peer, &frame),
            DeviceKind::Gateway => self.on_gateway_eth(k, now, peer, p, frame),
        }
    }

    fn record_station(&mut self, now: SimTime, dev: DeviceId, frame: &EthFrame) {
        if !self.cfg.settings.recording.stations {
            return;
        }
        let module = &self.dev_module[dev.index()];
        let mut msgs: Vec<(MessageId, SimTime)> = frame.message.map(|(m, _)| (m, frame.creation_time)).into_iter().collect();
        msgs.extend(frame.embedded.iter().map(|c| (c.message, c.creation_time)));
        for (m, created) in msgs {
            let name = format!("stationLatency[{}]", self.cfg.messages[m.index()].name);
            self.metrics.record(module, &name, now, (now - created).ticks() as f64);
        }
    }

    fn on_switch_in(&mut self, k: &mut Kernel<Ev>, now: SimTime, dev: DeviceId, via: PortId, frame: EthFrame) {
        self.record_station(now, dev, &frame);
        let back = self.reverse_port[via.index()];
        let egress: Vec<PortId> = self.forwarding[dev.index()]
            .get(&frame.dst)
            .map(|ps| ps.iter().copied().filter(|p| *p != back).collect())
            .unwrap_or_default();
        if egress.is_empty() {
            self.metrics.add_scalar(&self.dev_module[dev.index()], "unknownDestDrops", 1.0, "frames");
            return;
        }
        let last = egress.len() - 1;
        let mut frame = Some(frame);
        for (i, p) in egress.into_iter().enumerate() {
            let f = if i == last { frame.take().expect("last copy") } else { frame.clone().expect("copy") };
            self.enqueue_port(k, now, p, f);
        }
    }

    /// Sends a frame originating at `dev` towards its destination.
    fn send_eth(&mut self, k: &mut Kernel<Ev>, now: SimTime, dev: DeviceId, frame: EthFrame) {
        let egress = self.forwarding[dev.index()].get(&frame.dst).cloned().unwrap_or_default();
        if egress.is_empty() {
            self.metrics.add_scalar(&self.dev_module[dev.index()], "unknownDestDrops", 1.0, "frames");
            return;
        }
        for p in egress {
            self.enqueue_port(k, now, p, frame.clone());
        }
    }

    fn deliver(&mut self, now: SimTime, m: MessageId, instance: u64, sink: DeviceId, created: SimTime) {
        if !self.msg_receivers[m.index()].contains(&sink) {
            return;
        }
        let latency = now - created;
        debug_assert!(latency >= SimTime::ZERO);
        self.samples[m.index()] += 1;
        let name = &self.cfg.messages[m.index()].name;
        self.metrics.record(&self.dev_module[sink.index()], &format!("rxLatency[{name}]"), now, latency.ticks() as f64);
        self.latencies.entry((m, sink)).or_default().push(latency);
        if self.cfg.settings.recording.trace {
            self.log.deliveries.push(Delivery { message: m, instance, sink, created, arrived: now });
        }
    }

    fn receive_eth(&mut self, now: SimTime, dev: DeviceId, frame: &EthFrame) {
        if !self.cfg.is_addressed(frame.dst, dev) {
            return;
        }
        if let Some((m, inst)) = frame.message {
            self.deliver(now, m, inst, dev, frame.creation_time);
        }
        for c in &frame.embedded {
            self.deliver(now, c.message, c.instance, dev, c.creation_time);
        }
    }

    fn on_gateway_eth(&mut self, k: &mut Kernel<Ev>, now: SimTime, dev: DeviceId, via: PortId, frame: EthFrame) {
        self.record_station(now, dev, &frame);
        if !self.cfg.is_addressed(frame.dst, dev) {
            self.metrics.add_scalar(&self.dev_module[dev.index()], "unknownDestDrops", 1.0, "frames");
            return;
        }
        if let Some((m, inst)) = frame.message {
            self.deliver(now, m, inst, dev, frame.creation_time);
        }
        if frame.embedded.is_empty() {
            let targets = {
                let gw = self.gateways[dev.index()].as_ref().expect("gateway runtime");
                gw.table.route(Ingress::Port(via), MatchKey::Class(frame.class)).to_vec()
            };
            if targets.is_empty() && frame.message.is_some_and(|(m, _)| !self.msg_receivers[m.index()].contains(&dev)) {
                self.metrics.add_scalar(&self.dev_module[dev.index()], "routeDrops", 1.0, "frames");
            }
            let delay = self.cfg.devices[dev.index()].processing_delay;
            for t in targets {
                if let RouteTarget::Eth { dst, class, .. } = t {
                    let mut f = frame.clone();
                    f.src = dev;
                    f.dst = dst;
                    f.class = class;
                    k.schedule_in(delay, dev_target(dev), Ev::GwEth { dev, frames: vec![f] });
                }
            }
            return;
        }
        match transform_eth_to_can(&frame) {
            Ok(records) => {
                for c in records {
                    self.deliver(now, c.message, c.instance, dev, c.creation_time);
                    self.route_can(k, now, dev, Ingress::Port(via), c);
                }
            }
            Err(_) => self.metrics.add_scalar(&self.dev_module[dev.index()], "malformedDrops", 1.0, "frames"),
        }
    }

    fn route_can(&mut self, k: &mut Kernel<Ev>, now: SimTime, dev: DeviceId, ingress: Ingress, frame: CanFrame) {
        let gw = self.gateways[dev.index()].as_mut().expect("gateway runtime");
        let targets = gw.table.route_can(ingress, &frame).to_vec();
        let module = &self.dev_module[dev.index()];
        if targets.is_empty() {
            if !self.msg_receivers[frame.message.index()].contains(&dev) {
                self.metrics.add_scalar(module, "routeDrops", 1.0, "frames");
            }
            return;
        }
        let delay = self.cfg.devices[dev.index()].processing_delay;
        for t in targets {
            match t {
                RouteTarget::Can { bus, can_id } => {
                    let mut f = frame.clone();
                    f.id = can_id;
                    k.schedule_in(delay, dev_target(dev), Ev::GwCan { dev, bus, frame: f });
                }
                RouteTarget::Eth { dst, class, pool: Some(pi), holdup } => {
                    let ti = gw
                        .eth_targets
                        .iter()
                        .position(|x| *x == (dst, class))
                        .expect("target registered");
                    if self.cfg.settings.recording.trace {
                        self.log.pool_inserts.push(PoolInsert {
                            device: dev,
                            pool: pi,
                            time: now,
                            message: frame.message,
                            instance: frame.instance,
                            holdup,
                        });
                    }
                    let entry = PoolEntry { frame: frame.clone(), arrival: now, holdup, targets: vec![ti] };
                    if let Some(deadline) = gw.pools[pi].insert(entry) {
                        if let Some(h) = gw.timers[pi].take() {
                            k.cancel(h);
                        }
                        let h = k
                            .schedule(deadline, dev_target(dev), Ev::PoolDeadline { dev, pool: pi })
                            .expect("deadline not in the past");
                        gw.timers[pi] = Some(h);
                    }
                }
                RouteTarget::Eth { dst, class, pool: None, .. } => {
                    let template = EthFrame::new(dev, dst, 0, class, frame.creation_time).expect("empty frame");
                    let frames = aggregate_frames(&template, std::slice::from_ref(&frame));
                    k.schedule_in(delay, dev_target(dev), Ev::GwEth { dev, frames });
                }
            }
        }
    }

    fn on_pool_flush(&mut self, k: &mut Kernel<Ev>, now: SimTime, dev: DeviceId, pi: usize) {
        let gw = self.gateways[dev.index()].as_mut().expect("gateway runtime");
        let entries = gw.pools[pi].flush();
        if entries.is_empty() {
            return;
        }
        let module = &self.dev_module[dev.index()];
        let pool_name = &self.cfg.devices[dev.index()].pools[pi];
        self.metrics.record(module, &format!("poolSize[{pool_name}]"), now, entries.len() as f64);
        for e in &entries {
            let name = &self.cfg.messages[e.frame.message.index()].name;
            self.metrics
                .record(module, &format!("poolResidence[{name}]"), now, (now - e.arrival).ticks() as f64);
        }
        if self.cfg.settings.recording.trace {
            self.log.flushes.push(FlushLog {
                device: dev,
                pool: pi,
                time: now,
                entries: entries
                    .iter()
                    .map(|e| FlushedEntry {
                        message: e.frame.message,
                        instance: e.frame.instance,
                        arrival: e.arrival,
                        holdup: e.holdup,
                    })
                    .collect(),
            });
        }
        // Group by destination in order of first appearance.
        let mut groups: Vec<(usize, Vec<CanFrame>)> = Vec::new();
        for e in entries {
            for &ti in &e.targets {
                match groups.iter_mut().find(|g| g.0 == ti) {
                    Some(g) => g.1.push(e.frame.clone()),
                    None => groups.push((ti, vec![e.frame.clone()])),
                }
            }
        }
        let delay = self.cfg.devices[dev.index()].processing_delay;
        for (ti, cans) in groups {
            let (dst, class) = gw.eth_targets[ti];
            let template = EthFrame::new(dev, dst, 0, class, now).expect("empty frame");
            let frames = aggregate_frames(&template, &cans);
            k.schedule_in(delay, dev_target(dev), Ev::GwEth { dev, frames });
        }
    }

    fn on_can_kick(&mut self, k: &mut Kernel<Ev>, now: SimTime, b: BusId) {
        self.bus_kick[b.index()] = false;
        let bus = &mut self.buses[b.index()];
        if let Some(done) = bus.try_start(now) {
            if self.cfg.settings.recording.trace {
                let (node, f) = bus.in_flight.as_ref().expect("started");
                self.log.can_departures.push(CanDeparture {
                    bus: b,
                    node: *node,
                    start: now,
                    end: done,
                    id: f.id,
                    message: f.message,
                    instance: f.instance,
                });
            }
            k.schedule(done, bus_target(b), Ev::CanDone(b)).expect("future completion");
        }
    }

    fn on_can_done(&mut self, k: &mut Kernel<Ev>, now: SimTime, b: BusId) {
        let bus = &mut self.buses[b.index()];
        let (sender, frame) = bus.complete();
        let bits = bus.frame_bits(&frame);
        let attached = bus.attached.clone();
        self.bus_tx[b.index()] += 1;
        let module = &self.bus_module[b.index()];
        self.metrics.add_scalar(module, "txBits", bits as f64, "bit");
        if self.cfg.settings.recording.tx {
            self.metrics.record(module, "txBits", now, bits as f64);
        }
        self.kick_bus(k, b);
        for (i, dev) in attached.into_iter().enumerate() {
            if i == sender {
                continue;
            }
            match self.cfg.devices[dev.index()].kind {
                DeviceKind::Gateway => {
                    self.deliver(now, frame.message, frame.instance, dev, frame.creation_time);
                    self.route_can(k, now, dev, Ingress::Bus(b), frame.clone());
                }
                _ => self.deliver(now, frame.message, frame.instance, dev, frame.creation_time),
            }
        }
    }

    fn finalize(&mut self, now: SimTime) {
        let horizon_s = now.as_secs_f64();
        let rec = self.cfg.settings.recording;
        self.metrics.set_scalar(&self.cfg.name, SIMULATED_TIME, now.ticks() as f64, "ps");
        for (i, port) in self.ports.iter_mut().enumerate() {
            port.settle(now);
            let owner = self.cfg.ports[i].owner;
            let module = &self.dev_module[owner.index()];
            let label = &self.port_label[i];
            let bits = self.metrics.scalar(module, &format!("txBits[{label}]")).unwrap_or(0.0);
            if horizon_s > 0.0 {
                self.metrics.set_scalar(module, &format!("bitsPerSec[{label}]"), bits / horizon_s, "bit/s");
            }
            if rec.credit {
                for class in [AvbClass::A, AvbClass::B] {
                    if let Some(trace) = port.credit_trace(class) {
                        if rec.trace {
                            let st = port.shaper(class).state;
                            self.log.credit_traces.push(CreditTrace {
                                port: PortId::from(i),
                                class,
                                idle_slope: st.idle_slope,
                                send_slope: st.send_slope,
                                points: trace.to_vec(),
                            });
                        }
                        let name = format!("credit[{label},{}]", if class == AvbClass::A { "A" } else { "B" });
                        for pt in trace {
                            let bits = pt.credit as f64 / crate::ethernet::cbs::CREDIT_SCALE as f64;
                            self.metrics.record(module, &name, pt.time, bits);
                        }
                    }
                }
            }
        }
        for m in &self.bus_module {
            let bits = self.metrics.scalar(m, "txBits").unwrap_or(0.0);
            if horizon_s > 0.0 {
                self.metrics.set_scalar(m, "bitsPerSec", bits / horizon_s, "bit/s");
            }
        }
        for ((m, sink), lats) in &self.latencies {
            let module = &self.dev_module[sink.index()];
            let name = &self.cfg.messages[m.index()].name;
            self.metrics.set_scalar(module, &format!("jitter[{name}]"), jitter(lats).ticks() as f64, "ps");
            self.metrics.set_scalar(module, &format!("framesReceived[{name}]"), lats.len() as f64, "frames");
        }
        for (i, m) in self.cfg.messages.iter().enumerate() {
            let module = &self.dev_module[m.sender.index()];
            self.metrics
                .set_scalar(module, &format!("framesSent[{}]", m.name), self.next_instance[i] as f64, "frames");
        }
        for (i, b) in self.buses.iter().enumerate() {
            for (n, c) in b.controllers.iter().enumerate() {
                if c.overwritten() > 0 {
                    let dev = b.attached[n];
                    let name = format!("overwritten[{}]", self.cfg.buses[i].name);
                    self.metrics
                        .set_scalar(&self.dev_module[dev.index()], &name, c.overwritten() as f64, "frames");
                }
            }
        }
    }
}

/// CAN ids carried on `bus` by each message, for validation and tests.
pub fn can_ids_on_bus(cfg: &NetworkConfig, bus: BusId) -> Vec<(MessageId, CanId)> {
    let mut out = Vec::new();
    for (i, m) in cfg.messages.iter().enumerate() {
        for e in &m.emissions {
            if let Emission::Can { bus: b, can_id } = e {
                if *b == bus {
                    out.push((MessageId::from(i), *can_id));
                }
            }
        }
    }
    out
}
