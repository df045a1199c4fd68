//! Syntax tree and canonical pretty-printer.

use std::fmt::{self, Write};

use ivnsim_core::ethernet::AvbClass;
use ivnsim_core::SimTime;
use serde::{Deserialize, Serialize};

use crate::diag::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceKindKw {
    EthernetLink,
    CanLink,
    Node,
    Gateway,
    Switch,
}

impl DeviceKindKw {
    pub fn keyword(self) -> &'static str {
        match self {
            DeviceKindKw::EthernetLink => "ethernetLink",
            DeviceKindKw::CanLink => "canLink",
            DeviceKindKw::Node => "node",
            DeviceKindKw::Gateway => "gateway",
            DeviceKindKw::Switch => "switch",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "ethernetLink" => DeviceKindKw::EthernetLink,
            "canLink" => DeviceKindKw::CanLink,
            "node" => DeviceKindKw::Node,
            "gateway" => DeviceKindKw::Gateway,
            "switch" => DeviceKindKw::Switch,
            _ => return None,
        })
    }
}

/// Dotted name such as `std.ETH`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QName(pub Vec<String>);

impl fmt::Display for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Quantity(String),
    Ident(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Quantity(q) | Value::Ident(q) => f.write_str(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Value,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolDecl {
    pub name: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Body {
    pub pools: Vec<PoolDecl>,
    pub params: Vec<Param>,
}

/// A type or device declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decl {
    pub kind: DeviceKindKw,
    pub name: String,
    pub extends: Option<QName>,
    pub body: Option<Body>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypesBlock {
    pub name: String,
    pub decls: Vec<Decl>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkRef {
    Named(String),
    New(QName),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conn {
    pub a: String,
    pub link: Option<LinkRef>,
    pub b: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub conns: Vec<Conn>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassBind {
    Can { id: i64 },
    Tt { ct_id: i64 },
    Avb { id: i64, class: Option<AvbClass> },
    Rc { vl_id: i64, bag: SimTime },
    Be { priority: i64 },
    Pool { name: String, holdup: Option<SimTime> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub target: String,
    pub bind: Option<ClassBind>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub name: String,
    pub sender: String,
    pub receivers: Vec<String>,
    pub payload: u32,
    pub period: SimTime,
    pub offset: Option<SimTime>,
    pub multicast: Option<bool>,
    pub mapping: Vec<MapEntry>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkItem {
    InlineIni(String),
    Devices(Vec<Decl>),
    Connections(Vec<Segment>),
    Communication(Vec<Message>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub items: Vec<NetworkItem>,
    pub pos: Pos,
}

impl Network {
    pub fn devices(&self) -> impl Iterator<Item = &Decl> {
        self.items.iter().flat_map(|i| match i {
            NetworkItem::Devices(d) => d.as_slice(),
            _ => &[],
        })
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.items.iter().flat_map(|i| match i {
            NetworkItem::Connections(s) => s.as_slice(),
            _ => &[],
        })
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.items.iter().flat_map(|i| match i {
            NetworkItem::Communication(m) => m.as_slice(),
            _ => &[],
        })
    }

    pub fn inline_ini(&self) -> impl Iterator<Item = &str> {
        self.items.iter().filter_map(|i| match i {
            NetworkItem::InlineIni(t) => Some(t.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AndlFile {
    pub types: Vec<TypesBlock>,
    pub networks: Vec<Network>,
}

impl AndlFile {
    /// Resets every position so trees from different sources compare equal.
    pub fn clear_positions(&mut self) {
        let z = Pos::default();
        for t in &mut self.types {
            t.pos = z;
            for d in &mut t.decls {
                clear_decl(d);
            }
        }
        for n in &mut self.networks {
            n.pos = z;
            for item in &mut n.items {
                match item {
                    NetworkItem::InlineIni(_) => {}
                    NetworkItem::Devices(ds) => ds.iter_mut().for_each(clear_decl),
                    NetworkItem::Connections(ss) => {
                        for s in ss {
                            s.pos = z;
                            s.conns.iter_mut().for_each(|c| c.pos = z);
                        }
                    }
                    NetworkItem::Communication(ms) => {
                        for m in ms {
                            m.pos = z;
                            m.mapping.iter_mut().for_each(|e| e.pos = z);
                        }
                    }
                }
            }
        }
    }
}

fn clear_decl(d: &mut Decl) {
    d.pos = Pos::default();
    if let Some(b) = &mut d.body {
        b.pools.iter_mut().for_each(|p| p.pos = Pos::default());
        b.params.iter_mut().for_each(|p| p.pos = Pos::default());
    }
}

fn write_decl(out: &mut String, d: &Decl, indent: &str) {
    let _ = write!(out, "{indent}{} {}", d.kind.keyword(), d.name);
    if let Some(e) = &d.extends {
        let _ = write!(out, " extends {e}");
    }
    match &d.body {
        None => out.push_str(";\n"),
        Some(b) => {
            out.push_str(" {\n");
            for p in &b.pools {
                let _ = writeln!(out, "{indent}  pool {};", p.name);
            }
            for p in &b.params {
                let _ = writeln!(out, "{indent}  {} {};", p.name, p.value);
            }
            let _ = writeln!(out, "{indent}}}");
        }
    }
}

impl fmt::Display for ClassBind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassBind::Can { id } => write!(f, "can{{id {id};}}"),
            ClassBind::Tt { ct_id } => write!(f, "tt{{ctID {ct_id};}}"),
            ClassBind::Avb { id, class } => {
                write!(f, "avb{{id {id};")?;
                if let Some(c) = class {
                    write!(f, " class {};", if *c == AvbClass::A { "A" } else { "B" })?;
                }
                f.write_str("}")
            }
            ClassBind::Rc { vl_id, bag } => write!(f, "rc{{vlID {vl_id}; bag {bag};}}"),
            ClassBind::Be { priority } => write!(f, "be{{priority {priority};}}"),
            ClassBind::Pool { name, holdup } => {
                write!(f, "pool {name}")?;
                if let Some(h) = holdup {
                    write!(f, "{{holdUp {h};}}")?;
                }
                Ok(())
            }
        }
    }
}

/// Canonical source text; parsing it yields an equal tree up to positions.
pub fn print(file: &AndlFile) -> String {
    let mut out = String::new();
    for t in &file.types {
        let _ = writeln!(out, "types {} {{", t.name);
        for d in &t.decls {
            write_decl(&mut out, d, "  ");
        }
        out.push_str("}\n\n");
    }
    for n in &file.networks {
        let _ = writeln!(out, "network {} {{", n.name);
        for item in &n.items {
            match item {
                NetworkItem::InlineIni(text) => {
                    let _ = writeln!(out, "  inline ini {{\n```{text}```\n  }}");
                }
                NetworkItem::Devices(ds) => {
                    out.push_str("  devices {\n");
                    for d in ds {
                        write_decl(&mut out, d, "    ");
                    }
                    out.push_str("  }\n");
                }
                NetworkItem::Connections(ss) => {
                    out.push_str("  connections {\n");
                    for s in ss {
                        let _ = writeln!(out, "    segment {} {{", s.name);
                        for c in &s.conns {
                            let _ = write!(out, "      {} <--> ", c.a);
                            match &c.link {
                                Some(LinkRef::Named(l)) => {
                                    let _ = write!(out, "{l} <--> ");
                                }
                                Some(LinkRef::New(q)) => {
                                    let _ = write!(out, "{{new {q}}} <--> ");
                                }
                                None => {}
                            }
                            let _ = writeln!(out, "{};", c.b);
                        }
                        out.push_str("    }\n");
                    }
                    out.push_str("  }\n");
                }
                NetworkItem::Communication(ms) => {
                    out.push_str("  communication {\n");
                    for m in ms {
                        let _ = writeln!(out, "    message {} {{", m.name);
                        let _ = writeln!(out, "      sender {};", m.sender);
                        let _ = writeln!(out, "      receivers {};", m.receivers.join(", "));
                        let _ = writeln!(out, "      payload {}B;", m.payload);
                        let _ = writeln!(out, "      period {};", m.period);
                        if let Some(o) = m.offset {
                            let _ = writeln!(out, "      offset {o};");
                        }
                        if let Some(mc) = m.multicast {
                            let _ = writeln!(out, "      multicast {mc};");
                        }
                        out.push_str("      mapping {\n");
                        for e in &m.mapping {
                            match &e.bind {
                                Some(b) => {
                                    let _ = writeln!(out, "        {}: {b};", e.target);
                                }
                                None => {
                                    let _ = writeln!(out, "        {};", e.target);
                                }
                            }
                        }
                        out.push_str("      }\n    }\n");
                    }
                    out.push_str("  }\n");
                }
            }
        }
        out.push_str("}\n");
    }
    out
}
