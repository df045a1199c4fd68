//! Recursive-descent parser with statement-level error recovery.

use ivnsim_core::ethernet::AvbClass;
use ivnsim_core::time::{parse_bytes, parse_time};
use ivnsim_core::SimTime;

use crate::ast::*;
use crate::diag::{Diagnostic, Pos};
use crate::lexer::{lex, Tok, Token};

/// Parses a whole source file. The tree is returned even when diagnostics
/// are present; erroneous items are skipped.
pub fn parse(text: &str) -> (AndlFile, Vec<Diagnostic>) {
    let (tokens, diags) = lex(text);
    let mut p = Parser { tokens, i: 0, diags };
    let file = p.file();
    (file, p.diags)
}

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    diags: Vec<Diagnostic>,
}

/// Marker for a failed production; the diagnostic is already recorded.
struct Fail;

type PResult<T> = Result<T, Fail>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.i].clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&mut self, what: &str) -> Fail {
        let found = self.peek().describe();
        self.diags.push(Diagnostic::error(self.pos(), format!("expected {what}, found {found}")));
        Fail
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error_here(&t.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn qname(&mut self) -> PResult<QName> {
        let mut parts = vec![self.ident("a type name")?.0];
        while self.eat(&Tok::Dot) {
            parts.push(self.ident("a name after `.`")?.0);
        }
        Ok(QName(parts))
    }

    /// Skips to just past the next `;` or up to the `}` closing the current
    /// block, honouring nested braces.
    fn recover(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                Tok::RBrace if depth == 0 => return,
                Tok::RBrace => {
                    depth -= 1;
                    self.bump();
                    if depth == 0 && *self.peek() != Tok::Semi {
                        return;
                    }
                }
                Tok::LBrace => {
                    depth += 1;
                    self.bump();
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Parses `{ item* }` with per-item recovery.
    fn block<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(out);
                }
                Tok::Eof => return Err(self.error_here("`}`")),
                _ => {
                    let before = self.i;
                    match item(self) {
                        Ok(v) => out.push(v),
                        Err(Fail) => {
                            self.recover();
                            if self.i == before && *self.peek() != Tok::RBrace {
                                self.bump();
                            }
                        }
                    }
                }
            }
        }
    }

    fn file(&mut self) -> AndlFile {
        let mut file = AndlFile::default();
        while !self.at_eof() {
            let pos = self.pos();
            let res = if self.is_kw("types") {
                self.types_block().map(|t| file.types.push(t))
            } else if self.is_kw("network") {
                self.network().map(|n| file.networks.push(n))
            } else {
                Err(self.error_here("`types` or `network`"))
            };
            if res.is_err() {
                // Resynchronise at the next top-level keyword.
                self.bump();
                while !self.at_eof() && !(self.is_kw("types") || self.is_kw("network")) {
                    self.bump();
                }
            }
            debug_assert!(self.pos() >= pos || self.at_eof());
        }
        file
    }

    fn types_block(&mut self) -> PResult<TypesBlock> {
        let pos = self.pos();
        self.expect_kw("types")?;
        let (name, _) = self.ident("a types block name")?;
        let decls = self.block(|p| p.decl(false))?;
        Ok(TypesBlock { name, decls, pos })
    }

    fn decl(&mut self, require_semi: bool) -> PResult<Decl> {
        let pos = self.pos();
        let kind = match self.peek() {
            Tok::Ident(s) => DeviceKindKw::from_keyword(s),
            _ => None,
        };
        let Some(kind) = kind else {
            return Err(self.error_here("a device kind (ethernetLink, canLink, node, gateway, switch)"));
        };
        self.bump();
        let (name, _) = self.ident("a device name")?;
        let extends = if self.is_kw("extends") {
            self.bump();
            Some(self.qname()?)
        } else {
            None
        };
        let body = if *self.peek() == Tok::LBrace {
            Some(self.body()?)
        } else {
            None
        };
        if body.is_some() || !require_semi {
            self.eat(&Tok::Semi);
        } else {
            self.expect(&Tok::Semi)?;
        }
        Ok(Decl { kind, name, extends, body, pos })
    }

    fn body(&mut self) -> PResult<Body> {
        enum Item {
            Pool(PoolDecl),
            Param(Param),
        }
        let items = self.block(|p| {
            let (name, pos) = p.ident("a parameter name")?;
            if name == "pool" {
                let (pool, _) = p.ident("a pool name")?;
                p.expect(&Tok::Semi)?;
                return Ok(Item::Pool(PoolDecl { name: pool, pos }));
            }
            let value = p.value()?;
            p.expect(&Tok::Semi)?;
            Ok(Item::Param(Param { name, value, pos }))
        })?;
        let mut body = Body::default();
        for it in items {
            match it {
                Item::Pool(p) => body.pools.push(p),
                Item::Param(p) => body.params.push(p),
            }
        }
        Ok(body)
    }

    fn value(&mut self) -> PResult<Value> {
        let v = match self.peek().clone() {
            Tok::Int(i) => Value::Int(i),
            Tok::Quantity(q) => Value::Quantity(q),
            Tok::Ident(s) => Value::Ident(s),
            _ => return Err(self.error_here("a value")),
        };
        self.bump();
        Ok(v)
    }

    fn network(&mut self) -> PResult<Network> {
        let pos = self.pos();
        self.expect_kw("network")?;
        let (name, _) = self.ident("a network name")?;
        let items = self.block(|p| {
            if p.is_kw("inline") {
                p.bump();
                p.expect_kw("ini")?;
                p.expect(&Tok::LBrace)?;
                let text = match p.peek().clone() {
                    Tok::Fenced(t) => {
                        p.bump();
                        t
                    }
                    _ => return Err(p.error_here("a ``` fenced block")),
                };
                p.expect(&Tok::RBrace)?;
                Ok(NetworkItem::InlineIni(text))
            } else if p.is_kw("devices") {
                p.bump();
                Ok(NetworkItem::Devices(p.block(|p| p.decl(true))?))
            } else if p.is_kw("connections") {
                p.bump();
                Ok(NetworkItem::Connections(p.block(Parser::segment)?))
            } else if p.is_kw("communication") {
                p.bump();
                Ok(NetworkItem::Communication(p.block(Parser::message)?))
            } else {
                Err(p.error_here("`inline`, `devices`, `connections` or `communication`"))
            }
        })?;
        Ok(Network { name, items, pos })
    }

    fn segment(&mut self) -> PResult<Segment> {
        let pos = self.pos();
        self.expect_kw("segment")?;
        let (name, _) = self.ident("a segment name")?;
        let conns = self.block(Parser::conn)?;
        Ok(Segment { name, conns, pos })
    }

    fn conn(&mut self) -> PResult<Conn> {
        let pos = self.pos();
        let (a, _) = self.ident("a device name")?;
        self.expect(&Tok::Bidir)?;
        let (link, b);
        if *self.peek() == Tok::LBrace {
            self.bump();
            self.expect_kw("new")?;
            let q = self.qname()?;
            self.expect(&Tok::RBrace)?;
            self.expect(&Tok::Bidir)?;
            link = Some(LinkRef::New(q));
            b = self.ident("a device name")?.0;
        } else {
            let (mid, _) = self.ident("a device or link name")?;
            if self.eat(&Tok::Bidir) {
                link = Some(LinkRef::Named(mid));
                b = self.ident("a device name")?.0;
            } else {
                link = None;
                b = mid;
            }
        }
        self.expect(&Tok::Semi)?;
        Ok(Conn { a, link, b, pos })
    }

    fn time(&mut self) -> PResult<SimTime> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Quantity(q) => match parse_time(&q) {
                Ok(t) => {
                    self.bump();
                    Ok(t)
                }
                Err(e) => {
                    self.diags.push(Diagnostic::error(pos, e.to_string()));
                    Err(Fail)
                }
            },
            Tok::Int(0) => {
                self.bump();
                Ok(SimTime::ZERO)
            }
            _ => Err(self.error_here("a time such as `1ms`")),
        }
    }

    fn int(&mut self, what: &str) -> PResult<i64> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(i)
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn message(&mut self) -> PResult<Message> {
        let pos = self.pos();
        self.expect_kw("message")?;
        let (name, _) = self.ident("a message name")?;
        let mut sender = None;
        let mut receivers = None;
        let mut payload = None;
        let mut period = None;
        let mut offset = None;
        let mut multicast = None;
        let mut mapping = None;
        let fields = self.block(|p| {
            let (field, fpos) = p.ident("a message field")?;
            match field.as_str() {
                "sender" => {
                    sender = Some(p.ident("a device name")?.0);
                }
                "receivers" => {
                    let mut rs = vec![p.ident("a device name")?.0];
                    while p.eat(&Tok::Comma) {
                        rs.push(p.ident("a device name")?.0);
                    }
                    receivers = Some(rs);
                }
                "payload" => {
                    let qpos = p.pos();
                    let bytes = match p.peek().clone() {
                        Tok::Quantity(q) => parse_bytes(&q).map_err(|e| e.to_string()),
                        Tok::Int(i) => u32::try_from(i).map_err(|_| format!("payload {i} out of range")),
                        _ => return Err(p.error_here("a payload such as `6B`")),
                    };
                    p.bump();
                    match bytes {
                        Ok(b) => payload = Some(b),
                        Err(e) => {
                            p.diags.push(Diagnostic::error(qpos, e));
                            return Err(Fail);
                        }
                    }
                }
                "period" => period = Some(p.time()?),
                "offset" => offset = Some(p.time()?),
                "multicast" => {
                    multicast = Some(match p.peek() {
                        Tok::Ident(s) if s == "true" => true,
                        Tok::Ident(s) if s == "false" => false,
                        _ => return Err(p.error_here("`true` or `false`")),
                    });
                    p.bump();
                }
                "mapping" => {
                    mapping = Some(p.block(Parser::map_entry)?);
                    p.eat(&Tok::Semi);
                    return Ok(());
                }
                _ => {
                    p.diags.push(Diagnostic::error(fpos, format!("unknown message field `{field}`")));
                    return Err(Fail);
                }
            }
            p.expect(&Tok::Semi)
        });
        self.eat(&Tok::Semi);
        fields?;
        let mut missing = Vec::new();
        for (what, absent) in [
            ("sender", sender.is_none()),
            ("receivers", receivers.is_none()),
            ("payload", payload.is_none()),
            ("period", period.is_none()),
        ] {
            if absent {
                missing.push(Diagnostic::error(pos, format!("message `{name}` lacks `{what}`")));
            }
        }
        if !missing.is_empty() {
            self.diags.extend(missing);
            return Err(Fail);
        }
        let (Some(sender), Some(receivers), Some(payload), Some(period)) = (sender, receivers, payload, period) else {
            unreachable!("checked above");
        };
        Ok(Message {
            name,
            sender,
            receivers,
            payload,
            period,
            offset,
            multicast,
            mapping: mapping.unwrap_or_default(),
            pos,
        })
    }

    fn map_entry(&mut self) -> PResult<MapEntry> {
        let pos = self.pos();
        let (target, _) = self.ident("a segment or gateway name")?;
        if self.eat(&Tok::Semi) {
            return Ok(MapEntry { target, bind: None, pos });
        }
        self.expect(&Tok::Colon)?;
        let bind = self.class_bind()?;
        self.expect(&Tok::Semi)?;
        Ok(MapEntry { target, bind: Some(bind), pos })
    }

    fn class_bind(&mut self) -> PResult<ClassBind> {
        let (kw, kpos) = self.ident("a class binding (can, tt, avb, rc, be, pool)")?;
        if kw == "pool" {
            let (name, _) = self.ident("a pool name")?;
            let holdup = if *self.peek() == Tok::LBrace {
                self.bump();
                self.expect_kw("holdUp")?;
                let t = self.time()?;
                self.expect(&Tok::Semi)?;
                self.expect(&Tok::RBrace)?;
                Some(t)
            } else {
                None
            };
            return Ok(ClassBind::Pool { name, holdup });
        }
        let allowed: &[&str] = match kw.as_str() {
            "can" => &["id"],
            "tt" => &["ctID"],
            "avb" => &["id", "class"],
            "rc" => &["vlID", "bag"],
            "be" => &["priority"],
            _ => {
                self.diags.push(Diagnostic::error(kpos, format!("unknown traffic class `{kw}`")));
                return Err(Fail);
            }
        };
        self.expect(&Tok::LBrace)?;
        let mut ints: Vec<(String, i64)> = Vec::new();
        let mut bag = None;
        let mut class = None;
        while *self.peek() != Tok::RBrace {
            let (key, fpos) = self.ident("a field name")?;
            if !allowed.contains(&key.as_str()) {
                self.diags.push(Diagnostic::error(fpos, format!("`{kw}` has no field `{key}`")));
                return Err(Fail);
            }
            match key.as_str() {
                "bag" => bag = Some(self.time()?),
                "class" => {
                    class = Some(match self.peek() {
                        Tok::Ident(s) if s == "A" => AvbClass::A,
                        Tok::Ident(s) if s == "B" => AvbClass::B,
                        _ => return Err(self.error_here("`A` or `B`")),
                    });
                    self.bump();
                }
                _ => {
                    let v = self.int("an integer")?;
                    ints.push((key, v));
                }
            }
            self.expect(&Tok::Semi)?;
        }
        self.bump();
        let get = |p: &mut Self, key: &str| -> PResult<i64> {
            match ints.iter().find(|(k, _)| k == key) {
                Some((_, v)) => Ok(*v),
                None => {
                    p.diags.push(Diagnostic::error(kpos, format!("`{kw}` requires `{key}`")));
                    Err(Fail)
                }
            }
        };
        Ok(match kw.as_str() {
            "can" => ClassBind::Can { id: get(self, "id")? },
            "tt" => ClassBind::Tt { ct_id: get(self, "ctID")? },
            "avb" => ClassBind::Avb { id: get(self, "id")?, class },
            "rc" => {
                let vl_id = get(self, "vlID")?;
                let Some(bag) = bag else {
                    self.diags.push(Diagnostic::error(kpos, "`rc` requires `bag`"));
                    return Err(Fail);
                };
                ClassBind::Rc { vl_id, bag }
            }
            _ => ClassBind::Be { priority: get(self, "priority")? },
        })
    }
}
