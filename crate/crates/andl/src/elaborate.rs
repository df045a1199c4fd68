//! Semantic checks and translation of a parsed file into a [`NetworkConfig`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use ivnsim_core::can::{can_frame_duration, CanId, TxBufferMode, DEFAULT_CAN_BITRATE, MAX_CAN_PAYLOAD};
use ivnsim_core::config::{
    parse_ppm, BusConfig, DeviceConfig, DeviceKind, Emission, ForwardEntry, GroupConfig, LinkConfig, MessageConfig,
    PortConfig,
};
use ivnsim_core::ethernet::{
    eth_wire_bits, AvbClass, ClassTag, Destination, TdmaSchedule, MAX_ETH_PAYLOAD, MIN_ETH_PAYLOAD,
};
use ivnsim_core::gateway::encoding::{record_len, COUNT_PREFIX_BYTES};
use ivnsim_core::gateway::{compute_holdup, HoldUpPolicy, Ingress, MatchKey, RouteTarget, RoutingRule};
use ivnsim_core::time::{parse_rate, parse_time, TICKS_PER_S};
use ivnsim_core::{BusId, DeviceId, GroupId, LinkId, NetworkConfig, PortId, SimTime};
use num_rational::Ratio;

use crate::ast::*;
use crate::diag::{has_errors, Diagnostic, Pos};
use crate::tdma::{generate_with_placements, GenError, TtFlow, TtHop, DEFAULT_CYCLE_CAP};

pub const DEFAULT_ETH_RATE: u64 = 100_000_000;
/// Share of a link's rate that AVB reservations may claim.
pub const AVB_MAX_SHARE: Ratio<u64> = Ratio::new_raw(3, 4);

#[derive(Debug, Clone)]
pub struct CompileOptions {
    /// Network to compile when the file declares several.
    pub network: Option<String>,
    pub cycle_cap: SimTime,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { network: None, cycle_cap: DEFAULT_CYCLE_CAP }
    }
}

/// A compiled network plus the intermediate facts tests and tools inspect.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub config: NetworkConfig,
    pub tt_flows: Vec<TtFlow>,
    /// Device-level path of each (message, receiver) pair.
    pub paths: BTreeMap<(String, String), Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vertex {
    Dev(usize),
    Bus(usize),
}

#[derive(Debug, Clone)]
struct Dev {
    name: String,
    kind: DeviceKind,
    pos: Pos,
    params: Vec<Param>,
    pools: Vec<String>,
}

#[derive(Debug, Clone)]
struct Bus {
    name: String,
    pos: Pos,
    params: Vec<Param>,
    segment: Option<String>,
    attached: Vec<usize>,
}

#[derive(Debug, Clone)]
struct LinkInst {
    name: String,
    segment: String,
    params: Vec<Param>,
    ends: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entity {
    Dev(usize),
    Bus(usize),
    /// A declared, named ethernetLink.
    Link(usize),
}

#[derive(Debug, Clone)]
struct Edge {
    to: Vertex,
    /// Egress port when the edge is an Ethernet link.
    port: Option<PortId>,
    segment: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LegKind {
    Can { bus: usize },
    Eth { ports: Vec<PortId>, hops: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Leg {
    kind: LegKind,
    start: usize,
    end: usize,
    segment: String,
}

struct Ctx<'a> {
    diags: Vec<Diagnostic>,
    types: HashMap<String, (&'a Decl, String)>,
}

impl<'a> Ctx<'a> {
    fn err(&mut self, pos: Pos, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(pos, msg));
    }

    fn warn(&mut self, pos: Pos, msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(pos, msg));
    }

    fn lookup_type(&self, q: &QName, block: Option<&str>) -> Option<(&'a Decl, String)> {
        let full = q.to_string();
        if let Some(t) = self.types.get(&full) {
            return Some(t.clone());
        }
        if q.0.len() == 1 {
            if let Some(b) = block {
                if let Some(t) = self.types.get(&format!("{b}.{full}")) {
                    return Some(t.clone());
                }
            }
            let mut hits = self.types.iter().filter(|(k, _)| k.rsplit('.').next() == Some(full.as_str()));
            if let (Some((_, t)), None) = (hits.next(), hits.next()) {
                return Some(t.clone());
            }
        }
        None
    }

    /// Parameters and pools of `decl` with its `extends` chain applied,
    /// base first.
    fn effective(&mut self, decl: &Decl, block: Option<&str>) -> (Vec<Param>, Vec<String>) {
        let mut chain = vec![decl];
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut cur = decl;
        let mut cur_block = block.map(str::to_string);
        while let Some(base) = &cur.extends {
            let Some((t, b)) = self.lookup_type(base, cur_block.as_deref()) else {
                self.err(cur.pos, format!("unknown type `{base}`"));
                break;
            };
            let key = format!("{b}.{}", t.name);
            if !seen.insert(key) {
                self.err(decl.pos, format!("`{}` has a cyclic extends chain", decl.name));
                break;
            }
            if t.kind != decl.kind {
                self.err(
                    cur.pos,
                    format!("`{}` is a {} but extends the {} `{base}`", cur.name, cur.kind.keyword(), t.kind.keyword()),
                );
            }
            chain.push(t);
            cur = t;
            cur_block = Some(b);
        }
        let mut params: Vec<Param> = Vec::new();
        let mut pools: Vec<String> = Vec::new();
        for d in chain.iter().rev() {
            if let Some(body) = &d.body {
                for p in &body.params {
                    match params.iter_mut().find(|q| q.name == p.name) {
                        Some(q) => *q = p.clone(),
                        None => params.push(p.clone()),
                    }
                }
                for p in &body.pools {
                    if !pools.contains(&p.name) {
                        pools.push(p.name.clone());
                    }
                }
            }
        }
        (params, pools)
    }
}

fn param<'p>(params: &'p [Param], name: &str) -> Option<&'p Param> {
    params.iter().find(|p| p.name == name)
}

fn value_text(v: &Value) -> String {
    v.to_string()
}

/// Validates and compiles the selected network of `file`.
pub fn compile_file(file: &AndlFile, opts: &CompileOptions) -> (Option<Compiled>, Vec<Diagnostic>) {
    let mut ctx = Ctx { diags: Vec::new(), types: HashMap::new() };
    for block in &file.types {
        for d in &block.decls {
            let key = format!("{}.{}", block.name, d.name);
            if ctx.types.insert(key.clone(), (d, block.name.clone())).is_some() {
                ctx.err(d.pos, format!("duplicate type `{key}`"));
            }
        }
    }
    for block in &file.types {
        for d in &block.decls {
            ctx.effective(d, Some(&block.name));
        }
    }

    let net = match (&opts.network, file.networks.as_slice()) {
        (_, []) => {
            ctx.err(Pos { line: 1, col: 1 }, "no network declared");
            return (None, ctx.diags);
        }
        (None, [n]) => n,
        (None, ns) => {
            ctx.err(
                ns[1].pos,
                format!(
                    "several networks declared ({}); select one",
                    ns.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(", ")
                ),
            );
            return (None, ctx.diags);
        }
        (Some(want), ns) => match ns.iter().find(|n| &n.name == want) {
            Some(n) => n,
            None => {
                ctx.err(Pos { line: 1, col: 1 }, format!("no network named `{want}`"));
                return (None, ctx.diags);
            }
        },
    };
    let out = compile_network(&mut ctx, net, opts);
    let mut diags = ctx.diags;
    diags.sort_by_key(|d| d.pos);
    if has_errors(&diags) {
        (None, diags)
    } else {
        (out, diags)
    }
}

fn compile_network(ctx: &mut Ctx<'_>, net: &Network, opts: &CompileOptions) -> Option<Compiled> {
    // ---- devices
    let mut names: HashMap<String, Entity> = HashMap::new();
    let mut devs: Vec<Dev> = Vec::new();
    let mut buses: Vec<Bus> = Vec::new();
    let mut named_links: Vec<(String, Pos, Vec<Param>, bool)> = Vec::new();
    for d in net.devices() {
        let (params, pools) = ctx.effective(d, None);
        let entity = match d.kind {
            DeviceKindKw::EthernetLink => {
                named_links.push((d.name.clone(), d.pos, params.clone(), false));
                Entity::Link(named_links.len() - 1)
            }
            DeviceKindKw::CanLink => {
                buses.push(Bus { name: d.name.clone(), pos: d.pos, params: params.clone(), segment: None, attached: vec![] });
                Entity::Bus(buses.len() - 1)
            }
            k => {
                let kind = match k {
                    DeviceKindKw::Node => DeviceKind::Node,
                    DeviceKindKw::Switch => DeviceKind::Switch,
                    _ => DeviceKind::Gateway,
                };
                if !pools.is_empty() && kind != DeviceKind::Gateway {
                    ctx.err(d.pos, format!("only gateways have pools, `{}` is a {}", d.name, k.keyword()));
                }
                devs.push(Dev { name: d.name.clone(), kind, pos: d.pos, params: params.clone(), pools });
                Entity::Dev(devs.len() - 1)
            }
        };
        if names.insert(d.name.clone(), entity).is_some() {
            ctx.err(d.pos, format!("duplicate device `{}`", d.name));
        }
        check_params(ctx, d.kind, &d.name, &params);
    }

    // ---- connections
    let mut links: Vec<LinkInst> = Vec::new();
    let mut segments: Vec<(String, Pos)> = Vec::new();
    let mut seg_tech: HashMap<String, (bool, bool)> = HashMap::new();
    for seg in net.segments() {
        if segments.iter().any(|(s, _)| *s == seg.name) {
            ctx.err(seg.pos, format!("duplicate segment `{}`", seg.name));
        }
        if names.contains_key(&seg.name) {
            ctx.err(seg.pos, format!("segment `{}` has the same name as a device", seg.name));
        }
        segments.push((seg.name.clone(), seg.pos));
        for c in &seg.conns {
            let resolve = |ctx: &mut Ctx, n: &str| -> Option<Entity> {
                let e = names.get(n).copied();
                if e.is_none() {
                    ctx.err(c.pos, format!("unknown device `{n}`"));
                }
                e
            };
            let (Some(a), Some(b)) = (resolve(ctx, &c.a), resolve(ctx, &c.b)) else { continue };
            let tech = seg_tech.entry(seg.name.clone()).or_default();
            match (a, &c.link, b) {
                (Entity::Dev(x), None, Entity::Bus(bus)) | (Entity::Bus(bus), None, Entity::Dev(x)) => {
                    tech.0 = true;
                    if devs[x].kind == DeviceKind::Switch {
                        ctx.err(c.pos, format!("switch `{}` cannot attach to CAN bus `{}`", devs[x].name, buses[bus].name));
                        continue;
                    }
                    let bb = &mut buses[bus];
                    match &bb.segment {
                        Some(s) if *s != seg.name => {
                            let msg = format!("bus `{}` is attached in segments `{s}` and `{}`", bb.name, seg.name);
                            ctx.err(c.pos, msg);
                            continue;
                        }
                        _ => bb.segment = Some(seg.name.clone()),
                    }
                    if bb.attached.contains(&x) {
                        let msg = format!("`{}` is attached to `{}` twice", devs[x].name, bb.name);
                        ctx.err(c.pos, msg);
                    } else {
                        bb.attached.push(x);
                    }
                }
                (Entity::Dev(x), link, Entity::Dev(y)) => {
                    tech.1 = true;
                    if x == y {
                        ctx.err(c.pos, format!("`{}` is connected to itself", devs[x].name));
                        continue;
                    }
                    let (name, params) = match link {
                        None => (format!("{}_{}", devs[x].name, devs[y].name), Vec::new()),
                        Some(LinkRef::New(q)) => match ctx.lookup_type(q, None) {
                            Some((t, blk)) if t.kind == DeviceKindKw::EthernetLink => {
                                let probe = Decl {
                                    kind: DeviceKindKw::EthernetLink,
                                    name: String::new(),
                                    extends: Some(QName(vec![blk, t.name.clone()])),
                                    body: None,
                                    pos: c.pos,
                                };
                                let (params, _) = ctx.effective(&probe, None);
                                (format!("{}_{}", devs[x].name, devs[y].name), params)
                            }
                            Some((t, _)) => {
                                ctx.err(c.pos, format!("`{q}` is a {}, not an ethernetLink", t.kind.keyword()));
                                continue;
                            }
                            None => {
                                ctx.err(c.pos, format!("unknown type `{q}`"));
                                continue;
                            }
                        },
                        Some(LinkRef::Named(l)) => match names.get(l) {
                            Some(Entity::Link(li)) => {
                                let nl = &mut named_links[*li];
                                if nl.3 {
                                    ctx.err(c.pos, format!("link `{l}` is used by more than one connection"));
                                    continue;
                                }
                                nl.3 = true;
                                (nl.0.clone(), nl.2.clone())
                            }
                            Some(_) => {
                                ctx.err(c.pos, format!("`{l}` is not an ethernetLink"));
                                continue;
                            }
                            None => {
                                ctx.err(c.pos, format!("unknown link `{l}`"));
                                continue;
                            }
                        },
                    };
                    let mut name = name;
                    let mut n = 2;
                    while links.iter().any(|l| l.name == name) || (link.is_none() && names.contains_key(&name)) {
                        name = format!("{}_{}_{n}", devs[x].name, devs[y].name);
                        n += 1;
                    }
                    if links.iter().any(|l| {
                        (l.ends == [x, y] || l.ends == [y, x]) && !matches!(link, Some(LinkRef::Named(_)))
                    }) {
                        ctx.warn(c.pos, format!("`{}` and `{}` are connected more than once", devs[x].name, devs[y].name));
                    }
                    links.push(LinkInst { name, segment: seg.name.clone(), params, ends: [x, y] });
                }
                _ => ctx.err(c.pos, "a connection joins two devices, or a device and a CAN bus"),
            }
        }
    }
    for (seg, (can, eth)) in &seg_tech {
        if *can && *eth {
            let pos = segments.iter().find(|(s, _)| s == seg).map(|s| s.1).unwrap_or_default();
            ctx.err(pos, format!("segment `{seg}` mixes CAN buses and Ethernet links"));
        }
    }
    for b in &buses {
        if b.attached.is_empty() {
            ctx.warn(b.pos, format!("CAN bus `{}` has no attached devices", b.name));
        }
    }
    for (name, pos, _, used) in &named_links {
        if !used {
            ctx.warn(*pos, format!("link `{name}` is declared but never connected"));
        }
    }

    // ---- ports and graph
    let mut adj: Vec<Vec<Edge>> = vec![Vec::new(); devs.len()];
    let mut bus_adj: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
    let mut port_owner: Vec<(usize, usize, usize)> = Vec::new(); // (owner, peer, link)
    for (li, l) in links.iter().enumerate() {
        for side in 0..2 {
            let (from, to) = (l.ends[side], l.ends[1 - side]);
            let p = PortId::from(port_owner.len());
            port_owner.push((from, to, li));
            adj[from].push(Edge { to: Vertex::Dev(to), port: Some(p), segment: l.segment.clone() });
        }
    }
    for (bi, b) in buses.iter().enumerate() {
        for &d in &b.attached {
            adj[d].push(Edge { to: Vertex::Bus(bi), port: None, segment: b.segment.clone().unwrap_or_default() });
            bus_adj[bi].push(d);
        }
    }
    let graph = Graph { devs: &devs, adj: &adj, bus_adj: &bus_adj };

    // ---- messages
    let seg_names: BTreeSet<&str> = segments.iter().map(|(s, _)| s.as_str()).collect();
    let mut st = MsgState::default();
    let msgs: Vec<&Message> = net.messages().collect();
    let mut seen_msgs: HashSet<&str> = HashSet::new();
    for m in &msgs {
        if !seen_msgs.insert(&m.name) {
            ctx.err(m.pos, format!("duplicate message `{}`", m.name));
        }
        compile_message(ctx, &graph, &buses, &seg_names, &names, m, &mut st);
    }
    if has_errors(&ctx.diags) {
        return None;
    }

    // ---- assemble config
    let mut cfg = NetworkConfig { name: net.name.clone(), ..Default::default() };
    let default_cap = cfg.settings.queue_capacity;
    for (i, d) in devs.iter().enumerate() {
        let mut dc = DeviceConfig::new(d.name.clone(), d.kind);
        let p = &d.params;
        if let Some(v) = param(p, "drift") {
            dc.drift_ppm = parse_ppm(&value_text(&v.value)).unwrap_or_default();
        }
        if let Some(v) = param(p, "hardwareDelay") {
            dc.hardware_delay = parse_time(&value_text(&v.value)).unwrap_or(dc.hardware_delay);
        }
        if let Some(v) = param(p, "processingDelay") {
            dc.processing_delay = parse_time(&value_text(&v.value)).unwrap_or(dc.processing_delay);
        }
        if let Some(v) = param(p, "canBuffer") {
            if value_text(&v.value) == "overwrite" {
                dc.can_buffer = TxBufferMode::Overwrite;
            }
        }
        dc.pools = d.pools.clone();
        dc.ports = port_owner
            .iter()
            .enumerate()
            .filter(|(_, o)| o.0 == i)
            .map(|(pi, _)| PortId::from(pi))
            .collect();
        dc.buses = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.attached.contains(&i))
            .map(|(bi, _)| BusId::from(bi))
            .collect();
        dc.forwarding = st
            .forwarding
            .range((i, Destination::Unicast(DeviceId(0)))..)
            .take_while(|((d, _), _)| *d == i)
            .map(|((_, dst), ports)| ForwardEntry { dst: *dst, ports: ports.iter().copied().collect() })
            .collect();
        dc.routing = st
            .rules
            .get(&i)
            .map(|rs| {
                rs.iter()
                    .map(|(k, (targets, _))| RoutingRule { ingress: k.0, key: k.1, targets: targets.clone() })
                    .collect()
            })
            .unwrap_or_default();
        cfg.devices.push(dc);
    }
    for b in &buses {
        let rate = param(&b.params, "bandwidth")
            .and_then(|v| parse_rate(&value_text(&v.value)).ok())
            .unwrap_or(DEFAULT_CAN_BITRATE);
        let stuffing = param(&b.params, "stuffing").is_none_or(|v| value_text(&v.value) != "false");
        cfg.buses.push(BusConfig {
            name: b.name.clone(),
            segment: b.segment.clone().unwrap_or_default(),
            bitrate: rate,
            stuffing,
            attached: b.attached.iter().map(|&d| DeviceId::from(d)).collect(),
        });
    }
    for (li, l) in links.iter().enumerate() {
        cfg.links.push(LinkConfig {
            name: l.name.clone(),
            segment: l.segment.clone(),
            rate: link_rate(l),
            ends: [DeviceId::from(l.ends[0]), DeviceId::from(l.ends[1])],
            ports: [PortId::from(2 * li), PortId::from(2 * li + 1)],
        });
    }
    for (pi, &(owner, peer, li)) in port_owner.iter().enumerate() {
        let l = &links[li];
        let cap = param(&devs[owner].params, "queueCapacity")
            .and_then(|v| match v.value {
                Value::Int(n) if n > 0 => Some(n as usize),
                _ => None,
            })
            .unwrap_or(default_cap);
        let mut slope = st.avb_slope.get(&pi).copied().unwrap_or([0, 0]);
        for (ci, key) in ["idleSlopeA", "idleSlopeB"].iter().enumerate() {
            if let Some(v) = param(&l.params, key) {
                if let Ok(r) = parse_rate(&value_text(&v.value)) {
                    slope[ci] = r;
                }
            }
        }
        cfg.ports.push(PortConfig {
            owner: DeviceId::from(owner),
            peer: DeviceId::from(peer),
            link: LinkId::from(li),
            rate: link_rate(l),
            capacity: cap,
            idle_slope: slope,
            bags: st.bags.get(&pi).cloned().unwrap_or_default(),
            rc_priority: BTreeMap::new(),
        });
    }
    cfg.groups = st.groups.clone();

    // AVB reservation check against the configured slopes.
    for (pi, p) in cfg.ports.iter().enumerate() {
        let total = p.idle_slope[0] + p.idle_slope[1];
        if Ratio::new(total, p.rate.max(1)) > AVB_MAX_SHARE {
            let (owner, _, li) = port_owner[pi];
            let pos = st.avb_pos.get(&pi).copied().unwrap_or(devs[owner].pos);
            ctx.err(
                pos,
                format!(
                    "AVB reservation of {total} bit/s on `{}` from `{}` exceeds 75% of {} bit/s",
                    links[li].name, devs[owner].name, p.rate
                ),
            );
        }
    }

    // Messages and TT flows need frame sizes that depend on pool contents.
    let mut paths = BTreeMap::new();
    for (mi, m) in msgs.iter().enumerate() {
        let Some(cm) = st.compiled.get(mi).and_then(|c| c.as_ref()) else { continue };
        let sender = graph.dev_of(&m.sender).expect("resolved");
        cfg.messages.push(MessageConfig {
            name: m.name.clone(),
            sender: DeviceId::from(sender),
            receivers: cm.receivers.iter().map(|&r| DeviceId::from(r)).collect(),
            payload: m.payload,
            period: m.period,
            offset: m.offset.unwrap_or(SimTime::ZERO),
            emissions: cm.emissions.clone(),
            gateways: cm.gateways.iter().map(|&g| DeviceId::from(g)).collect(),
        });
        for (r, p) in &cm.paths {
            paths.insert((m.name.clone(), devs[*r].name.clone()), p.iter().map(|v| graph.vertex_name(*v, &buses)).collect());
        }
    }

    let mut flows = Vec::new();
    for tt in &st.tt_legs {
        let m = msgs[tt.msg];
        let content = match tt.records {
            None => m.payload.max(MIN_ETH_PAYLOAD),
            Some(Some((g, pool))) => pool_frame_estimate(&st, &msgs, g, pool),
            Some(None) => (COUNT_PREFIX_BYTES + record_len(m.payload as usize)) as u32,
        }
        .clamp(MIN_ETH_PAYLOAD, MAX_ETH_PAYLOAD);
        let hops = tt
            .ports
            .iter()
            .map(|&p| {
                let pc = &cfg.ports[p.index()];
                let peer = &cfg.devices[pc.peer.index()];
                TtHop {
                    port: p,
                    duration: SimTime::for_bits(eth_wire_bits(content), pc.rate),
                    delay_after: if peer.kind == DeviceKind::Switch { peer.hardware_delay } else { SimTime::ZERO },
                }
            })
            .collect();
        let start_dev = &cfg.devices[tt.start];
        let release = m.offset.unwrap_or(SimTime::ZERO)
            + tt.upstream
            + if start_dev.kind == DeviceKind::Gateway { start_dev.processing_delay } else { SimTime::ZERO };
        flows.push(TtFlow { ct_id: tt.ct_id, period: m.period, release, hops });
    }
    match generate_with_placements(&flows, opts.cycle_cap) {
        Ok(g) => cfg.schedule = g.schedule,
        Err(e) => {
            let pos = match &e {
                GenError::Infeasible { ct_id, .. } | GenError::BadPeriod { ct_id } => st
                    .tt_legs
                    .iter()
                    .find(|t| t.ct_id == *ct_id)
                    .map(|t| msgs[t.msg].pos)
                    .unwrap_or(net.pos),
                GenError::CycleTooLong { .. } => net.pos,
            };
            ctx.err(pos, format!("TDMA schedule: {e}"));
        }
    }
    if cfg.schedule.windows.is_empty() {
        cfg.schedule = TdmaSchedule::default();
    }
    cfg.inline_ini = net.inline_ini().map(str::to_string).collect();
    if has_errors(&ctx.diags) {
        return None;
    }
    Some(Compiled { config: cfg, tt_flows: flows, paths })
}

fn link_rate(l: &LinkInst) -> u64 {
    param(&l.params, "bandwidth")
        .and_then(|v| parse_rate(&value_text(&v.value)).ok())
        .unwrap_or(DEFAULT_ETH_RATE)
}

/// Upper bound on the aggregate content of one flush of `pool` at gateway `g`.
fn pool_frame_estimate(st: &MsgState, msgs: &[&Message], g: usize, pool: usize) -> u32 {
    let mut bytes = COUNT_PREFIX_BYTES as i64;
    for (mi, holdup) in st.pool_members.get(&(g, pool)).into_iter().flatten() {
        let m = msgs[*mi];
        let per = holdup.ticks() / m.period.ticks() + 1;
        bytes += per * record_len(m.payload as usize) as i64;
    }
    bytes.clamp(0, MAX_ETH_PAYLOAD as i64) as u32
}

fn check_params(ctx: &mut Ctx<'_>, kind: DeviceKindKw, name: &str, params: &[Param]) {
    let allowed: &[&str] = match kind {
        DeviceKindKw::EthernetLink => &["bandwidth", "idleSlopeA", "idleSlopeB"],
        DeviceKindKw::CanLink => &["bandwidth", "stuffing"],
        DeviceKindKw::Node => &["drift", "queueCapacity"],
        DeviceKindKw::Switch => &["drift", "hardwareDelay", "queueCapacity"],
        DeviceKindKw::Gateway => &["drift", "processingDelay", "holdUpPolicy", "canBuffer", "queueCapacity"],
    };
    for p in params {
        if !allowed.contains(&p.name.as_str()) {
            ctx.err(p.pos, format!("unknown parameter `{}` for {} `{name}`", p.name, kind.keyword()));
            continue;
        }
        let text = value_text(&p.value);
        let ok = match p.name.as_str() {
            "bandwidth" | "idleSlopeA" | "idleSlopeB" => parse_rate(&text).is_ok(),
            "stuffing" => matches!(text.as_str(), "true" | "false"),
            "drift" => parse_ppm(&text).is_some(),
            "queueCapacity" => matches!(p.value, Value::Int(n) if n > 0),
            "hardwareDelay" | "processingDelay" => parse_time(&text).is_ok_and(|t| t >= SimTime::ZERO),
            "holdUpPolicy" => HoldUpPolicy::parse(&text).is_some(),
            "canBuffer" => matches!(text.as_str(), "queue" | "overwrite"),
            _ => true,
        };
        if !ok {
            ctx.err(p.pos, format!("bad value `{text}` for `{}`", p.name));
        }
    }
}

struct Graph<'a> {
    devs: &'a [Dev],
    adj: &'a [Vec<Edge>],
    bus_adj: &'a [Vec<usize>],
}

impl Graph<'_> {
    fn dev_of(&self, name: &str) -> Option<usize> {
        self.devs.iter().position(|d| d.name == name)
    }

    fn vertex_name(&self, v: Vertex, buses: &[Bus]) -> String {
        match v {
            Vertex::Dev(d) => self.devs[d].name.clone(),
            Vertex::Bus(b) => buses[b].name.clone(),
        }
    }

    fn neighbours(&self, v: Vertex) -> Vec<Vertex> {
        match v {
            Vertex::Dev(d) => self.adj[d].iter().map(|e| e.to).collect(),
            Vertex::Bus(b) => self.bus_adj[b].iter().map(|&d| Vertex::Dev(d)).collect(),
        }
    }

    fn key(&self, v: Vertex) -> usize {
        match v {
            Vertex::Dev(d) => d,
            Vertex::Bus(b) => self.devs.len() + b,
        }
    }

    /// Shortest path `from -> to`, taken from a BFS tree rooted at `to`.
    /// `through` decides which vertices may relay.
    fn path(&self, from: Vertex, to: Vertex, through: impl Fn(Vertex) -> bool) -> Option<Vec<Vertex>> {
        let n = self.devs.len() + self.bus_adj.len();
        let mut parent: Vec<Option<Vertex>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut q = VecDeque::new();
        seen[self.key(to)] = true;
        q.push_back(to);
        while let Some(v) = q.pop_front() {
            if v == from {
                break;
            }
            if v != to && !through(v) {
                continue;
            }
            for w in self.neighbours(v) {
                if !seen[self.key(w)] {
                    seen[self.key(w)] = true;
                    parent[self.key(w)] = Some(v);
                    q.push_back(w);
                }
            }
        }
        if !seen[self.key(from)] {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = parent[self.key(cur)].expect("BFS tree");
            path.push(cur);
        }
        Some(path)
    }

    fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        self.adj[a].iter().find(|e| e.to == Vertex::Dev(b))
    }
}

struct TtLeg {
    msg: usize,
    ct_id: u32,
    start: usize,
    ports: Vec<PortId>,
    /// `None` for plain frames; otherwise the pool of the leg's gateway, if any.
    records: Option<Option<(usize, usize)>>,
    upstream: SimTime,
}

struct CompiledMsg {
    receivers: Vec<usize>,
    emissions: Vec<Emission>,
    gateways: Vec<usize>,
    paths: Vec<(usize, Vec<Vertex>)>,
}

type RuleKey = (Ingress, MatchKey);

#[derive(Default)]
struct MsgState {
    forwarding: BTreeMap<(usize, Destination), BTreeSet<PortId>>,
    /// Per gateway: rule key -> (targets, owning message).
    rules: HashMap<usize, BTreeMap<RuleKey, (Vec<RouteTarget>, usize)>>,
    avb_slope: HashMap<usize, [u64; 2]>,
    avb_pos: HashMap<usize, Pos>,
    bags: HashMap<usize, BTreeMap<u32, SimTime>>,
    vl_owner: HashMap<u32, (SimTime, String)>,
    ct_owner: HashMap<u32, String>,
    can_ids: HashMap<(usize, u16), String>,
    groups: Vec<GroupConfig>,
    tt_legs: Vec<TtLeg>,
    pool_members: BTreeMap<(usize, usize), Vec<(usize, SimTime)>>,
    compiled: Vec<Option<CompiledMsg>>,
    msg_names: Vec<String>,
}

fn class_of(bind: &ClassBind) -> Option<ClassTag> {
    Some(match *bind {
        ClassBind::Tt { ct_id } => ClassTag::Tt { ct_id: ct_id as u32 },
        ClassBind::Rc { vl_id, .. } => ClassTag::Rc { vl_id: vl_id as u32 },
        ClassBind::Avb { id, class } => ClassTag::Avb { class: class.unwrap_or(AvbClass::A), stream_id: id as u32 },
        ClassBind::Be { priority } => ClassTag::Be { priority: priority as u8 },
        _ => return None,
    })
}

fn split_legs(g: &Graph<'_>, path: &[Vertex]) -> Result<Vec<Leg>, String> {
    let is_endpoint = |i: usize, v: Vertex| match v {
        Vertex::Dev(d) => i == 0 || i == path.len() - 1 || g.devs[d].kind == DeviceKind::Gateway,
        Vertex::Bus(_) => false,
    };
    let ends: Vec<usize> = path.iter().enumerate().filter(|(i, v)| is_endpoint(*i, **v)).map(|(i, _)| i).collect();
    let mut legs = Vec::new();
    for w in ends.windows(2) {
        let (Vertex::Dev(start), Vertex::Dev(end)) = (path[w[0]], path[w[1]]) else { unreachable!() };
        let inner = &path[w[0] + 1..w[1]];
        if let [Vertex::Bus(b)] = inner {
            let seg = g.adj[start]
                .iter()
                .find(|e| e.to == Vertex::Bus(*b))
                .map(|e| e.segment.clone())
                .unwrap_or_default();
            legs.push(Leg { kind: LegKind::Can { bus: *b }, start, end, segment: seg });
            continue;
        }
        // Ethernet leg; re-derive the switch path from a tree rooted at the
        // leg end so that forwarding towards `end` is consistent.
        let sub = g
            .path(Vertex::Dev(start), Vertex::Dev(end), |v| {
                matches!(v, Vertex::Dev(d) if g.devs[d].kind == DeviceKind::Switch)
            })
            .unwrap_or_else(|| path[w[0]..=w[1]].to_vec());
        let devs: Vec<usize> = sub
            .iter()
            .map(|v| match v {
                Vertex::Dev(d) => *d,
                Vertex::Bus(_) => usize::MAX,
            })
            .collect();
        if devs.contains(&usize::MAX) {
            return Err(format!("path from `{}` to `{}` mixes CAN and Ethernet without a gateway", g.devs[start].name, g.devs[end].name));
        }
        let mut ports = Vec::new();
        let mut seg: Option<String> = None;
        for pair in devs.windows(2) {
            let e = g.edge(pair[0], pair[1]).expect("adjacent");
            match &seg {
                Some(s) if *s != e.segment => {
                    return Err(format!(
                        "path crosses from segment `{s}` to `{}` at `{}` without a gateway",
                        e.segment, g.devs[pair[0]].name
                    ))
                }
                _ => seg = Some(e.segment.clone()),
            }
            ports.push(e.port.expect("ethernet edge"));
        }
        legs.push(Leg { kind: LegKind::Eth { ports, hops: devs }, start, end, segment: seg.unwrap_or_default() });
    }
    Ok(legs)
}

fn can_id_of(bind: Option<&ClassBind>) -> Option<u16> {
    match bind {
        Some(ClassBind::Can { id }) => Some(*id as u16),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn compile_message(
    ctx: &mut Ctx<'_>,
    g: &Graph<'_>,
    buses: &[Bus],
    seg_names: &BTreeSet<&str>,
    names: &HashMap<String, Entity>,
    m: &Message,
    st: &mut MsgState,
) {
    let mi = st.compiled.len();
    st.compiled.push(None);
    st.msg_names.push(m.name.clone());
    let errs_before = ctx.diags.iter().filter(|d| d.is_error()).count();
    let pos = m.pos;
    let resolve_dev = |ctx: &mut Ctx, n: &str, role: &str| -> Option<usize> {
        match names.get(n) {
            Some(Entity::Dev(d)) if g.devs[*d].kind != DeviceKind::Switch => Some(*d),
            Some(Entity::Dev(_)) => {
                ctx.err(pos, format!("{role} `{n}` of `{}` is a switch", m.name));
                None
            }
            Some(_) => {
                ctx.err(pos, format!("{role} `{n}` of `{}` is a link, not a device", m.name));
                None
            }
            None => {
                ctx.err(pos, format!("unknown {role} `{n}` in message `{}`", m.name));
                None
            }
        }
    };
    let sender = resolve_dev(ctx, &m.sender, "sender");
    let mut receivers = Vec::new();
    for r in &m.receivers {
        if let Some(d) = resolve_dev(ctx, r, "receiver") {
            if Some(d) == sender {
                ctx.err(pos, format!("message `{}` names its sender `{r}` as a receiver", m.name));
            } else if receivers.contains(&d) {
                ctx.warn(pos, format!("receiver `{r}` listed twice in `{}`", m.name));
            } else {
                receivers.push(d);
            }
        }
    }
    if m.period <= SimTime::ZERO {
        ctx.err(pos, format!("message `{}` needs a positive period", m.name));
    }
    if m.offset.is_some_and(|o| o < SimTime::ZERO) {
        ctx.err(pos, format!("message `{}` has a negative offset", m.name));
    }

    // Mapping table.
    let mut seg_bind: HashMap<&str, (&ClassBind, Pos)> = HashMap::new();
    let mut gw_bind: HashMap<usize, (Option<(String, Option<SimTime>)>, Pos)> = HashMap::new();
    for e in &m.mapping {
        if seg_names.contains(e.target.as_str()) {
            match &e.bind {
                None => ctx.err(e.pos, format!("segment `{}` needs a class binding", e.target)),
                Some(ClassBind::Pool { .. }) => ctx.err(e.pos, format!("a pool binding needs a gateway, `{}` is a segment", e.target)),
                Some(b) => {
                    if seg_bind.insert(e.target.as_str(), (b, e.pos)).is_some() {
                        ctx.err(e.pos, format!("segment `{}` mapped twice", e.target));
                    }
                }
            }
            continue;
        }
        match names.get(&e.target) {
            Some(Entity::Dev(d)) if g.devs[*d].kind == DeviceKind::Gateway => {
                let pool = match &e.bind {
                    None => None,
                    Some(ClassBind::Pool { name, holdup }) => {
                        if !g.devs[*d].pools.contains(name) {
                            ctx.err(e.pos, format!("gateway `{}` has no pool `{name}`", e.target));
                        }
                        if holdup.is_some_and(|h| h < SimTime::ZERO) {
                            ctx.err(e.pos, "hold-up must not be negative");
                        }
                        Some((name.clone(), *holdup))
                    }
                    Some(_) => {
                        ctx.err(e.pos, format!("gateway `{}` takes a pool binding or none", e.target));
                        None
                    }
                };
                if gw_bind.insert(*d, (pool, e.pos)).is_some() {
                    ctx.err(e.pos, format!("gateway `{}` mapped twice", e.target));
                }
            }
            Some(_) if e.bind.is_none() => {
                ctx.err(e.pos, format!("bare mapping entry `{}` must name a gateway", e.target))
            }
            Some(_) => ctx.err(e.pos, format!("`{}` is neither a segment nor a gateway", e.target)),
            None => ctx.err(e.pos, format!("unknown segment or gateway `{}`", e.target)),
        }
    }
    for (seg, (b, bpos)) in &seg_bind {
        let in_range = match b {
            ClassBind::Can { id } => (0..=CanId::MAX as i64).contains(id),
            ClassBind::Tt { ct_id } => (0..=u32::MAX as i64).contains(ct_id),
            ClassBind::Avb { id, .. } => (0..=u32::MAX as i64).contains(id),
            ClassBind::Rc { vl_id, bag } => (0..=u32::MAX as i64).contains(vl_id) && *bag > SimTime::ZERO,
            ClassBind::Be { priority } => (0..=7).contains(priority),
            ClassBind::Pool { .. } => true,
        };
        if !in_range {
            ctx.err(*bpos, format!("binding `{b}` on `{seg}` is out of range"));
        }
    }
    let Some(sender) = sender else { return };
    if receivers.is_empty() || ctx.diags.iter().filter(|d| d.is_error()).count() > errs_before {
        return;
    }

    // Paths and legs per receiver.
    let relay = |v: Vertex| match v {
        Vertex::Dev(d) => g.devs[d].kind != DeviceKind::Node,
        Vertex::Bus(_) => true,
    };
    let mut routes: Vec<(usize, Vec<Vertex>, Vec<Leg>)> = Vec::new();
    for &r in &receivers {
        let Some(path) = g.path(Vertex::Dev(sender), Vertex::Dev(r), relay) else {
            ctx.err(pos, format!("receiver `{}` of `{}` is unreachable from `{}`", g.devs[r].name, m.name, m.sender));
            continue;
        };
        match split_legs(g, &path) {
            Ok(legs) => routes.push((r, path, legs)),
            Err(e) => ctx.err(pos, format!("message `{}`: {e}", m.name)),
        }
    }
    if routes.len() != receivers.len() {
        return;
    }

    // Segment bindings along each path.
    let mut on_path_gws: BTreeSet<usize> = BTreeSet::new();
    for (_, _, legs) in &routes {
        for (li, leg) in legs.iter().enumerate() {
            if li > 0 {
                on_path_gws.insert(leg.start);
            }
            match (seg_bind.get(leg.segment.as_str()), &leg.kind) {
                (None, _) => {
                    ctx.err(pos, format!("message `{}` has no mapping for segment `{}` on its path", m.name, leg.segment));
                }
                (Some((ClassBind::Can { .. }, _)), LegKind::Can { .. }) => {
                    if m.payload as usize > MAX_CAN_PAYLOAD {
                        ctx.err(pos, format!("message `{}`: CAN payload exceeds 8 bytes ({} B)", m.name, m.payload));
                    }
                }
                (Some((b, bp)), LegKind::Can { .. }) => {
                    ctx.err(*bp, format!("segment `{}` is a CAN segment; `{b}` needs Ethernet", leg.segment))
                }
                (Some((ClassBind::Can { .. }, bp)), LegKind::Eth { .. }) => {
                    ctx.err(*bp, format!("segment `{}` is an Ethernet segment; `can` needs a CAN bus", leg.segment))
                }
                (Some(_), LegKind::Eth { .. }) => {}
            }
        }
    }
    for gw in &on_path_gws {
        if !gw_bind.contains_key(gw) {
            ctx.err(pos, format!("gateway `{}` is on the path of `{}` but not listed in its mapping", g.devs[*gw].name, m.name));
        }
    }
    for (gw, (_, gp)) in &gw_bind {
        if !on_path_gws.contains(gw) {
            ctx.err(*gp, format!("gateway `{}` is listed for `{}` but not on its path", g.devs[*gw].name, m.name));
        }
    }
    if ctx.diags.iter().filter(|d| d.is_error()).count() > errs_before {
        return;
    }

    let bind_of = |leg: &Leg| seg_bind.get(leg.segment.as_str()).map(|b| b.0);
    let has_can = routes.iter().any(|(_, _, legs)| legs.iter().any(|l| matches!(l.kind, LegKind::Can { .. })));
    let eth_payload_ok = has_can || m.payload <= MAX_ETH_PAYLOAD;
    if !eth_payload_ok {
        ctx.err(pos, format!("message `{}`: Ethernet payload exceeds {MAX_ETH_PAYLOAD} bytes", m.name));
        return;
    }

    // Multicast decision.
    let single_eth = routes.iter().all(|(_, _, legs)| legs.len() == 1 && matches!(legs[0].kind, LegKind::Eth { .. }));
    let first_class = routes.first().and_then(|(_, _, legs)| bind_of(&legs[0]));
    let multicast = match m.multicast {
        Some(v) => v,
        None => receivers.len() > 1 && single_eth && matches!(first_class, Some(ClassBind::Rc { .. })),
    };
    if multicast {
        if !single_eth {
            ctx.err(pos, format!("multicast `{}` must reach every receiver over Ethernet without gateways", m.name));
            return;
        }
        if matches!(first_class, Some(ClassBind::Tt { .. })) {
            ctx.err(pos, format!("multicast is not supported for time-triggered `{}`", m.name));
            return;
        }
    }

    // CAN id uniqueness per bus and class identifiers across messages.
    for (_, _, legs) in &routes {
        for leg in legs {
            let b = bind_of(leg).expect("checked");
            match (&leg.kind, b) {
                (LegKind::Can { bus }, ClassBind::Can { id }) => {
                    let key = (*bus, *id as u16);
                    match st.can_ids.get(&key) {
                        Some(other) if *other != m.name => ctx.err(
                            pos,
                            format!("duplicate CAN id {id} on bus `{}` (`{other}` and `{}`)", buses[*bus].name, m.name),
                        ),
                        _ => {
                            st.can_ids.insert(key, m.name.clone());
                        }
                    }
                }
                (_, ClassBind::Tt { ct_id }) => match st.ct_owner.get(&(*ct_id as u32)) {
                    Some(o) if *o != m.name => ctx.err(pos, format!("ctID {ct_id} is used by `{o}` and `{}`", m.name)),
                    _ => {
                        st.ct_owner.insert(*ct_id as u32, m.name.clone());
                    }
                },
                (_, ClassBind::Rc { vl_id, bag }) => match st.vl_owner.get(&(*vl_id as u32)) {
                    Some((b2, o)) if b2 != bag => {
                        ctx.err(pos, format!("vlID {vl_id} has bag {b2} in `{o}` but {bag} in `{}`", m.name))
                    }
                    _ => {
                        st.vl_owner.insert(*vl_id as u32, (*bag, m.name.clone()));
                    }
                },
                _ => {}
            }
        }
    }
    if ctx.diags.iter().filter(|d| d.is_error()).count() > errs_before {
        return;
    }

    let period = m.period;
    let group = if multicast {
        st.groups.push(GroupConfig { name: m.name.clone(), members: receivers.iter().map(|&r| DeviceId::from(r)).collect() });
        Some(Destination::Multicast(GroupId::from(st.groups.len() - 1)))
    } else {
        None
    };

    let mut emissions: Vec<Emission> = Vec::new();
    let mut gateways: Vec<usize> = Vec::new();
    let mut tt_seen: BTreeSet<(u32, Vec<PortId>)> = BTreeSet::new();
    let mut eth_seen: BTreeSet<(usize, usize, Vec<PortId>)> = BTreeSet::new();
    let mut avb_ports: BTreeSet<PortId> = BTreeSet::new();
    for (_, _, legs) in &routes {
        // CAN id carried inside Ethernet frames: from the last CAN leg so
        // far, or the next one for frames that start on Ethernet.
        let next_can = |from: usize| legs[from..].iter().find_map(|l| match l.kind {
            LegKind::Can { .. } => can_id_of(bind_of(l)),
            _ => None,
        });
        let mut record_id: Option<u16> = None;
        let mut upstream = SimTime::ZERO;
        for (li, leg) in legs.iter().enumerate() {
            let bind = bind_of(leg).expect("checked");
            if let LegKind::Can { .. } = leg.kind {
                record_id = can_id_of(Some(bind));
            }
            let carried = if has_can { record_id.or_else(|| next_can(li)) } else { None };
            let dst = match (&leg.kind, group) {
                (LegKind::Eth { .. }, Some(gdst)) => gdst,
                _ => Destination::Unicast(DeviceId::from(leg.end)),
            };
            // Pool at the gateway starting this leg.
            let pool = if li > 0 {
                gw_bind.get(&leg.start).and_then(|(p, _)| p.clone())
            } else {
                None
            };

            if li == 0 {
                let em = match (&leg.kind, bind) {
                    (LegKind::Can { bus }, ClassBind::Can { id }) => Emission::Can {
                        bus: BusId::from(*bus),
                        can_id: CanId::new(*id as u32).expect("range checked"),
                    },
                    (LegKind::Eth { .. }, b) => Emission::Eth {
                        dst,
                        class: class_of(b).expect("ethernet class"),
                        can_id: carried.map(|id| CanId::new(id as u32).expect("range checked")),
                    },
                    _ => unreachable!("binding kinds checked"),
                };
                if !emissions.contains(&em) {
                    emissions.push(em);
                }
            } else {
                // Gateway rule at leg.start: from legs[li-1] into this leg.
                let gw = leg.start;
                if !gateways.contains(&gw) {
                    gateways.push(gw);
                }
                let prev = &legs[li - 1];
                let prev_bind = bind_of(prev).expect("checked");
                let ingress = match &prev.kind {
                    LegKind::Can { bus } => Ingress::Bus(BusId::from(*bus)),
                    LegKind::Eth { ports, .. } => Ingress::Port(*ports.last().expect("non-empty leg")),
                };
                let in_id = match &prev.kind {
                    LegKind::Can { .. } => can_id_of(Some(prev_bind)),
                    LegKind::Eth { .. } => carried,
                };
                let key = match in_id {
                    Some(id) => MatchKey::CanId(CanId::new(id as u32).expect("range checked")),
                    None => MatchKey::Class(class_of(prev_bind).expect("ethernet class")),
                };
                let target = match (&leg.kind, bind) {
                    (LegKind::Can { bus }, ClassBind::Can { id }) => RouteTarget::Can {
                        bus: BusId::from(*bus),
                        can_id: CanId::new(*id as u32).expect("range checked"),
                    },
                    (LegKind::Eth { .. }, b) => {
                        let (pool_idx, holdup) = match (&pool, in_id) {
                            (Some((pname, explicit)), Some(id)) => {
                                let policy_param = param(&g.devs[gw].params, "holdUpPolicy");
                                let policy = policy_param
                                    .and_then(|p| HoldUpPolicy::parse(&value_text(&p.value)))
                                    .unwrap_or_default();
                                if explicit.is_none() && policy_param.is_none() {
                                    let gp = gw_bind[&gw].1;
                                    ctx.warn(gp, format!("no hold-up for `{}` in `{pname}`; using 0", m.name));
                                }
                                let h = compute_holdup(CanId::new(id as u32).expect("range"), period, policy, *explicit);
                                let idx = g.devs[gw].pools.iter().position(|p| p == pname).expect("pool checked");
                                let members = st.pool_members.entry((gw, idx)).or_default();
                                if !members.iter().any(|(x, _)| *x == mi) {
                                    members.push((mi, h));
                                }
                                (Some(idx), h)
                            }
                            (Some(_), None) => {
                                ctx.err(gw_bind[&gw].1, format!("pooling `{}` at `{}` needs CAN frames", m.name, g.devs[gw].name));
                                (None, SimTime::ZERO)
                            }
                            (None, _) => (None, SimTime::ZERO),
                        };
                        RouteTarget::Eth { dst, class: class_of(b).expect("ethernet class"), pool: pool_idx, holdup }
                    }
                    _ => unreachable!("binding kinds checked"),
                };
                let rules = st.rules.entry(gw).or_default();
                match rules.get_mut(&(ingress, key)) {
                    Some((targets, owner)) if *owner == mi => {
                        if !targets.contains(&target) {
                            targets.push(target);
                        }
                    }
                    Some((_, owner)) => {
                        let other = &st.msg_names[*owner];
                        ctx.err(
                            pos,
                            format!(
                                "gateway `{}` cannot tell `{}` from `{other}`: same ingress and header",
                                g.devs[gw].name, m.name
                            ),
                        );
                    }
                    None => {
                        rules.insert((ingress, key), (vec![target], mi));
                    }
                }
                upstream += g.devs_delay(gw);
                if let Some((_, Some(h))) = &pool {
                    upstream += *h;
                }
            }

            match &leg.kind {
                LegKind::Can { bus } => {
                    let rate = param(&buses[*bus].params, "bandwidth")
                        .and_then(|v| parse_rate(&value_text(&v.value)).ok())
                        .unwrap_or(DEFAULT_CAN_BITRATE);
                    upstream += can_frame_duration(m.payload as usize, rate, true);
                }
                LegKind::Eth { ports, hops } => {
                    let content = match carried {
                        Some(_) => (COUNT_PREFIX_BYTES + record_len(m.payload as usize)) as u32,
                        None => m.payload,
                    }
                    .max(MIN_ETH_PAYLOAD);
                    for (hi, p) in ports.iter().enumerate() {
                        st.forwarding
                            .entry((hops[hi], dst))
                            .or_default()
                            .insert(*p);
                    }
                    let fresh = eth_seen.insert((leg.start, leg.end, ports.clone()));
                    match bind {
                        ClassBind::Rc { vl_id, bag } => {
                            for p in ports {
                                st.bags.entry(p.index()).or_default().insert(*vl_id as u32, *bag);
                            }
                        }
                        ClassBind::Avb { class, .. } if fresh => {
                            let ci = class.unwrap_or(AvbClass::A).index();
                            let bits = eth_wire_bits(content) as u128 * TICKS_PER_S as u128;
                            let slope = bits.div_ceil(period.ticks() as u128) as u64;
                            for p in ports {
                                // A multicast frame crosses a shared port once.
                                if multicast && !avb_ports.insert(*p) {
                                    continue;
                                }
                                st.avb_slope.entry(p.index()).or_insert([0, 0])[ci] += slope;
                                st.avb_pos.entry(p.index()).or_insert(pos);
                            }
                        }
                        ClassBind::Tt { ct_id }
                            if tt_seen.insert((*ct_id as u32, ports.clone())) => {
                                let records = carried.map(|_| {
                                    pool.as_ref().map(|(pname, _)| {
                                        (leg.start, g.devs[leg.start].pools.iter().position(|p| p == pname).expect("pool"))
                                    })
                                });
                                st.tt_legs.push(TtLeg {
                                    msg: mi,
                                    ct_id: *ct_id as u32,
                                    start: leg.start,
                                    ports: ports.clone(),
                                    records,
                                    upstream,
                                });
                            }
                        _ => {}
                    }
                    // Rough arrival estimate; TT frames wait for their window anyway.
                    let per_hop = SimTime::for_bits(eth_wire_bits(content), DEFAULT_ETH_RATE);
                    upstream += SimTime(per_hop.ticks() * ports.len() as i64);
                }
            }
        }
    }
    if ctx.diags.iter().filter(|d| d.is_error()).count() > errs_before {
        return;
    }
    st.compiled[mi] = Some(CompiledMsg {
        receivers,
        emissions,
        gateways,
        paths: routes.into_iter().map(|(r, p, _)| (r, p)).collect(),
    });
}

impl Graph<'_> {
    fn devs_delay(&self, d: usize) -> SimTime {
        param(&self.devs[d].params, "processingDelay")
            .and_then(|v| parse_time(&value_text(&v.value)).ok())
            .unwrap_or(ivnsim_core::gateway::DEFAULT_GATEWAY_DELAY)
    }
}
