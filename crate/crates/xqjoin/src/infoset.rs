//! Tabular XML infoset encoding.
//!
//! A document is shredded into one row per node, keyed by `pre` (document
//! order rank) with `size` (nodes in the subtree, excluding self) and `level`
//! (depth, root at 0). Together these three columns decide every supported
//! XPath axis by range and equality predicates alone; `kind`/`name` serve
//! kind and name tests, `value`/`data` give value-based access for nodes
//! with `size <= 1`, and `frag` tells trees apart when one table hosts
//! several documents.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::algebra::{Atom, CmpOp, Predicate, Term, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Doc,
    Elem,
    Attr,
    Text,
    // Reserved; the shredder never emits these.
    Comment,
    Pi,
}

impl NodeKind {
    pub fn word(self) -> &'static str {
        match self {
            NodeKind::Doc => "DOC",
            NodeKind::Elem => "ELEM",
            NodeKind::Attr => "ATTR",
            NodeKind::Text => "TEXT",
            NodeKind::Comment => "COMMENT",
            NodeKind::Pi => "PI",
        }
    }

    pub fn parse(s: &str) -> Option<NodeKind> {
        Some(match s {
            "DOC" => NodeKind::Doc,
            "ELEM" => NodeKind::Elem,
            "ATTR" => NodeKind::Attr,
            "TEXT" => NodeKind::Text,
            "COMMENT" => NodeKind::Comment,
            "PI" => NodeKind::Pi,
            _ => return None,
        })
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// One encoded node.
#[derive(Debug, Clone, PartialEq)]
pub struct DocRow {
    pub pre: u32,
    pub size: u32,
    pub level: u32,
    pub kind: NodeKind,
    /// Tag or attribute name; the document URI when `kind = DOC`.
    pub name: Option<String>,
    /// Untyped string value, present only when `size <= 1`.
    pub value: Option<String>,
    /// `value` cast to decimal, when the cast succeeds.
    pub data: Option<f64>,
    pub frag: u32,
}

/// The encoded document table, plus parent pointers retained from the
/// shredding pass for the naive tree-walking evaluator.
#[derive(Debug, Clone, Default)]
pub struct DocTable {
    pub rows: Vec<DocRow>,
    pub parent: Vec<Option<u32>>,
}

#[derive(Debug, Error)]
pub enum InfosetError {
    #[error("XML parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unknown pre rank {0}")]
    UnknownPre(u32),
    #[error("unsupported axis {0}")]
    UnsupportedAxis(String),
    #[error("CSV error: {0}")]
    Csv(String),
}

/// Casts an untyped value to decimal: optional sign, digits, optional
/// fraction. Anything else leaves the typed column absent.
pub fn decimal_cast(s: &str) -> Option<f64> {
    let t = s.trim();
    let rest = t.strip_prefix(['+', '-']).unwrap_or(t);
    if rest.is_empty() {
        return None;
    }
    let (int, frac) = match rest.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (rest, None),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    t.parse::<f64>().ok()
}

// ---------------------------------------------------------------------------
// Shredding
// ---------------------------------------------------------------------------

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

struct Builder {
    rows: Vec<DocRow>,
    parent: Vec<Option<u32>>,
    frag: u32,
}

impl Builder {
    fn push(&mut self, level: u32, kind: NodeKind, name: Option<String>, value: Option<String>, parent: Option<u32>) -> u32 {
        let pre = self.rows.len() as u32;
        let data = value.as_deref().and_then(decimal_cast);
        self.rows.push(DocRow { pre, size: 0, level, kind, name, value, data, frag: self.frag });
        self.parent.push(parent);
        pre
    }
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, InfosetError> {
        Err(InfosetError::Parse { offset: self.pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), InfosetError> {
        if self.eat(b) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", b as char))
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        self.bytes[self.pos..].starts_with(s.as_bytes())
    }

    fn name(&mut self) -> Result<String, InfosetError> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' || b == b':' => self.pos += 1,
            _ => return self.err("expected a name"),
        }
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b':') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn entity(&mut self) -> Result<char, InfosetError> {
        // Called just past '&'.
        let end = self.bytes[self.pos..]
            .iter()
            .position(|&b| b == b';')
            .ok_or(InfosetError::Parse { offset: self.pos, msg: "unterminated entity".into() })?;
        let ent = std::str::from_utf8(&self.bytes[self.pos..self.pos + end])
            .map_err(|_| InfosetError::Parse { offset: self.pos, msg: "invalid utf-8".into() })?;
        let c = match ent {
            "lt" => '<',
            "gt" => '>',
            "amp" => '&',
            "quot" => '"',
            "apos" => '\'',
            _ if ent.starts_with("#x") || ent.starts_with("#X") => {
                let n = u32::from_str_radix(&ent[2..], 16)
                    .map_err(|_| InfosetError::Parse { offset: self.pos, msg: "bad char ref".into() })?;
                char::from_u32(n).ok_or(InfosetError::Parse { offset: self.pos, msg: "bad char ref".into() })?
            }
            _ if ent.starts_with('#') => {
                let n: u32 = ent[1..]
                    .parse()
                    .map_err(|_| InfosetError::Parse { offset: self.pos, msg: "bad char ref".into() })?;
                char::from_u32(n).ok_or(InfosetError::Parse { offset: self.pos, msg: "bad char ref".into() })?
            }
            _ => return self.err(format!("unknown entity &{ent};")),
        };
        self.pos += end + 1;
        Ok(c)
    }

    fn attr_value(&mut self) -> Result<String, InfosetError> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return self.err("expected quoted attribute value"),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return self.err("unterminated attribute value"),
                Some(b) if b == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(b'&') => {
                    self.pos += 1;
                    out.push(self.entity()?);
                }
                Some(b'<') => return self.err("'<' in attribute value"),
                Some(b) => {
                    out.push(b as char);
                    if b < 0x80 {
                        self.pos += 1;
                    } else {
                        // Re-decode the full UTF-8 scalar.
                        out.pop();
                        let s = std::str::from_utf8(&self.bytes[self.pos..])
                            .map_err(|_| InfosetError::Parse { offset: self.pos, msg: "invalid utf-8".into() })?;
                        let c = s.chars().next().unwrap();
                        out.push(c);
                        self.pos += c.len_utf8();
                    }
                }
            }
        }
    }

    fn element(&mut self, level: u32, parent: u32, b: &mut Builder) -> Result<(), InfosetError> {
        self.expect(b'<')?;
        let tag = self.name()?;
        let pre = b.push(level, NodeKind::Elem, Some(tag.clone()), None, Some(parent));
        // Attributes receive pre ranks inside the owner's range, directly
        // after the owner and before element content.
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'>') | Some(b'/') => break,
                Some(_) => {
                    let an = self.name()?;
                    self.skip_ws();
                    self.expect(b'=')?;
                    self.skip_ws();
                    let av = self.attr_value()?;
                    b.push(level + 1, NodeKind::Attr, Some(an), Some(av), Some(pre));
                }
                None => return self.err("unterminated start tag"),
            }
        }
        if self.eat(b'/') {
            self.expect(b'>')?;
        } else {
            self.expect(b'>')?;
            self.content(level + 1, pre, b)?;
            self.expect(b'<')?;
            self.expect(b'/')?;
            let close = self.name()?;
            if close != tag {
                return self.err(format!("mismatched end tag </{close}>, expected </{tag}>"));
            }
            self.skip_ws();
            self.expect(b'>')?;
        }
        let next = b.rows.len() as u32;
        b.rows[pre as usize].size = next - pre - 1;
        // An element with a single text child carries that child's value.
        if b.rows[pre as usize].size == 1 && b.rows[pre as usize + 1].kind == NodeKind::Text {
            b.rows[pre as usize].value = b.rows[pre as usize + 1].value.clone();
            b.rows[pre as usize].data = b.rows[pre as usize + 1].data;
        }
        Ok(())
    }

    fn content(&mut self, level: u32, parent: u32, b: &mut Builder) -> Result<(), InfosetError> {
        let mut text = String::new();
        loop {
            match self.peek() {
                None => return self.err("unterminated element content"),
                Some(b'<') => {
                    if self.starts_with("</") {
                        Self::flush_text(&mut text, level, parent, b);
                        return Ok(());
                    }
                    if self.starts_with("<!--") || self.starts_with("<?") || self.starts_with("<!") {
                        return self.err("comments, processing instructions, and declarations are not supported here");
                    }
                    Self::flush_text(&mut text, level, parent, b);
                    self.element(level, parent, b)?;
                }
                Some(b'&') => {
                    self.pos += 1;
                    text.push(self.entity()?);
                }
                Some(byte) => {
                    if byte < 0x80 {
                        text.push(byte as char);
                        self.pos += 1;
                    } else {
                        let s = std::str::from_utf8(&self.bytes[self.pos..])
                            .map_err(|_| InfosetError::Parse { offset: self.pos, msg: "invalid utf-8".into() })?;
                        let c = s.chars().next().unwrap();
                        text.push(c);
                        self.pos += c.len_utf8();
                    }
                }
            }
        }
    }

    // Whitespace-only text is dropped; kept text is stored trimmed, which is
    // what the round-trip guarantee (modulo whitespace) is defined against.
    fn flush_text(text: &mut String, level: u32, parent: u32, b: &mut Builder) {
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            b.push(level, NodeKind::Text, None, Some(trimmed.to_string()), Some(parent));
        }
        text.clear();
    }
}

/// Shreds well-formed XML text (single root element, no namespaces, comments,
/// or processing instructions) into the node table in a single pass.
pub fn shred(xml_text: &str, uri: &str, frag: u32) -> Result<DocTable, InfosetError> {
    let mut p = Parser { bytes: xml_text.as_bytes(), pos: 0 };
    let mut b = Builder { rows: Vec::new(), parent: Vec::new(), frag };
    b.push(0, NodeKind::Doc, Some(uri.to_string()), None, None);
    p.skip_ws();
    if p.starts_with("<?xml") {
        while !p.starts_with("?>") {
            if p.peek().is_none() {
                return p.err("unterminated XML declaration");
            }
            p.pos += 1;
        }
        p.pos += 2;
        p.skip_ws();
    }
    if p.peek() != Some(b'<') {
        return p.err("expected a root element");
    }
    p.element(1, 0, &mut b)?;
    p.skip_ws();
    if p.peek().is_some() {
        return p.err("trailing content after the root element");
    }
    b.rows[0].size = b.rows.len() as u32 - 1;
    Ok(DocTable { rows: b.rows, parent: b.parent })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            _ => out.push(c),
        }
    }
}

fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

impl DocTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, pre: u32) -> Result<&DocRow, InfosetError> {
        self.rows.get(pre as usize).ok_or(InfosetError::UnknownPre(pre))
    }

    /// Appends another document, re-basing its pre ranks behind this table.
    /// Fragment ids must stay distinct.
    pub fn append(&mut self, other: &DocTable) {
        let offset = self.rows.len() as u32;
        let frags: HashSet<u32> = self.rows.iter().map(|r| r.frag).collect();
        for r in &other.rows {
            assert!(!frags.contains(&r.frag), "fragment id {} already present", r.frag);
            let mut r = r.clone();
            r.pre += offset;
            self.rows.push(r);
        }
        for p in &other.parent {
            self.parent.push(p.map(|q| q + offset));
        }
    }

    /// Serializes the subtrees rooted at the given pre ranks, in order.
    pub fn serialize(&self, pres: &[u32]) -> Result<String, InfosetError> {
        let mut out = String::new();
        for &pre in pres {
            let row = self.row(pre)?;
            match row.kind {
                NodeKind::Text => {
                    escape_text(row.value.as_deref().unwrap_or(""), &mut out);
                }
                NodeKind::Attr => {
                    out.push_str(row.name.as_deref().unwrap_or(""));
                    out.push_str("=\"");
                    escape_attr(row.value.as_deref().unwrap_or(""), &mut out);
                    out.push('"');
                }
                NodeKind::Elem => self.serialize_elem(pre, &mut out),
                NodeKind::Doc => {
                    for c in self.children(pre) {
                        let sub = self.serialize(&[c])?;
                        out.push_str(&sub);
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn serialize_elem(&self, pre: u32, out: &mut String) {
        let row = &self.rows[pre as usize];
        let name = row.name.as_deref().unwrap_or("");
        out.push('<');
        out.push_str(name);
        let kids = self.children(pre);
        let mut content = Vec::new();
        for c in kids {
            let cr = &self.rows[c as usize];
            if cr.kind == NodeKind::Attr {
                out.push(' ');
                out.push_str(cr.name.as_deref().unwrap_or(""));
                out.push_str("=\"");
                escape_attr(cr.value.as_deref().unwrap_or(""), out);
                out.push('"');
            } else {
                content.push(c);
            }
        }
        if content.is_empty() {
            out.push_str("/>");
            return;
        }
        out.push('>');
        for c in content {
            let cr = &self.rows[c as usize];
            match cr.kind {
                NodeKind::Text => escape_text(cr.value.as_deref().unwrap_or(""), out),
                NodeKind::Elem => self.serialize_elem(c, out),
                _ => {}
            }
        }
        out.push_str("</");
        out.push_str(name);
        out.push('>');
    }

    /// Immediate children (attributes included), in document order.
    pub fn children(&self, pre: u32) -> Vec<u32> {
        let row = &self.rows[pre as usize];
        let mut out = Vec::new();
        let mut c = pre + 1;
        let end = pre + row.size;
        while c <= end {
            out.push(c);
            c += self.rows[c as usize].size + 1;
        }
        out
    }

    // ------------------------------------------------------------------
    // CSV import/export: header pre,size,level,kind,name,value,data,frag;
    // an empty field means absent.
    // ------------------------------------------------------------------

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pre", "size", "level", "kind", "name", "value", "data", "frag"]).unwrap();
        for r in &self.rows {
            w.write_record([
                r.pre.to_string(),
                r.size.to_string(),
                r.level.to_string(),
                r.kind.word().to_string(),
                r.name.clone().unwrap_or_default(),
                r.value.clone().unwrap_or_default(),
                r.data.map(|d| format!("{d:?}")).unwrap_or_default(),
                r.frag.to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn from_csv(text: &str) -> Result<DocTable, InfosetError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| InfosetError::Csv(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<u32, InfosetError> {
                field(i).parse().map_err(|_| InfosetError::Csv(format!("bad number {:?}", field(i))))
            };
            let opt = |i: usize| {
                let f = field(i);
                if f.is_empty() { None } else { Some(f.to_string()) }
            };
            rows.push(DocRow {
                pre: num(0)?,
                size: num(1)?,
                level: num(2)?,
                kind: NodeKind::parse(field(3))
                    .ok_or_else(|| InfosetError::Csv(format!("bad kind {:?}", field(3))))?,
                name: opt(4),
                value: opt(5),
                data: if field(6).is_empty() {
                    None
                } else {
                    Some(field(6).parse().map_err(|_| InfosetError::Csv("bad data".into()))?)
                },
                frag: num(7)?,
            });
        }
        let mut t = DocTable { rows, parent: Vec::new() };
        t.rebuild_parents();
        Ok(t)
    }

    pub fn from_csv_path(path: &Path) -> Result<DocTable, InfosetError> {
        let text = std::fs::read_to_string(path).map_err(|e| InfosetError::Csv(e.to_string()))?;
        DocTable::from_csv(&text)
    }

    fn rebuild_parents(&mut self) {
        self.parent = vec![None; self.rows.len()];
        let mut stack: Vec<u32> = Vec::new();
        for i in 0..self.rows.len() as u32 {
            while let Some(&top) = stack.last() {
                let t = &self.rows[top as usize];
                if i > t.pre + t.size || self.rows[i as usize].frag != t.frag {
                    stack.pop();
                } else {
                    break;
                }
            }
            self.parent[i as usize] = stack.last().copied();
            stack.push(i);
        }
    }

    /// Checks the structural invariants: pre contiguity and subtree
    /// containment (every node inside a subtree range sits strictly deeper).
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.pre as usize != i {
                return Err(format!("pre {} at index {i}", r.pre));
            }
            if (r.pre + r.size) as usize >= self.rows.len() + 1 && r.size > 0 {
                return Err(format!("size of pre {} overflows the table", r.pre));
            }
            for s in (r.pre + 1)..=(r.pre + r.size).min(self.rows.len() as u32 - 1) {
                if self.rows[s as usize].level <= r.level {
                    return Err(format!("node {s} inside subtree of {} but not deeper", r.pre));
                }
            }
            if r.kind == NodeKind::Doc && r.level != 0 {
                return Err(format!("DOC row {} at level {}", r.pre, r.level));
            }
            if let Some(v) = &r.value {
                if r.size > 1 {
                    return Err(format!("value {:?} on pre {} with size {}", v, r.pre, r.size));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Axis and test predicates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Child,
    Descendant,
    DescendantOrSelf,
    SelfAxis,
    Parent,
    Ancestor,
    AncestorOrSelf,
    Following,
    Preceding,
    Attribute,
}

pub const SUPPORTED_AXES: [Axis; 10] = [
    Axis::Child,
    Axis::Descendant,
    Axis::DescendantOrSelf,
    Axis::SelfAxis,
    Axis::Parent,
    Axis::Ancestor,
    Axis::AncestorOrSelf,
    Axis::Following,
    Axis::Preceding,
    Axis::Attribute,
];

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Child => "child",
            Axis::Descendant => "descendant",
            Axis::DescendantOrSelf => "descendant-or-self",
            Axis::SelfAxis => "self",
            Axis::Parent => "parent",
            Axis::Ancestor => "ancestor",
            Axis::AncestorOrSelf => "ancestor-or-self",
            Axis::Following => "following",
            Axis::Preceding => "preceding",
            Axis::Attribute => "attribute",
        }
    }

    pub fn parse(s: &str) -> Result<Axis, InfosetError> {
        Ok(match s {
            "child" => Axis::Child,
            "descendant" => Axis::Descendant,
            "descendant-or-self" => Axis::DescendantOrSelf,
            "self" => Axis::SelfAxis,
            "parent" => Axis::Parent,
            "ancestor" => Axis::Ancestor,
            "ancestor-or-self" => Axis::AncestorOrSelf,
            "following" => Axis::Following,
            "preceding" => Axis::Preceding,
            "attribute" => Axis::Attribute,
            other => return Err(InfosetError::UnsupportedAxis(other.to_string())),
        })
    }

    /// The principal node kind selected by a plain name test on this axis.
    pub fn principal_kind(self) -> NodeKind {
        match self {
            Axis::Attribute => NodeKind::Attr,
            _ => NodeKind::Elem,
        }
    }
}

/// Context columns carry the `_c` suffix: `pre_c`, `size_c`, `level_c`,
/// `frag_c`. Target columns keep the document table names.
pub const CTX_PRE: &str = "pre_c";
pub const CTX_SIZE: &str = "size_c";
pub const CTX_LEVEL: &str = "level_c";
pub const CTX_FRAG: &str = "frag_c";

#[derive(Debug, Clone)]
pub struct AxisPredicate {
    pub axis: Axis,
    pub conjuncts: Predicate,
    /// Context columns the conjuncts reference.
    pub context_cols: Vec<&'static str>,
}

/// The range/equality conjuncts deciding axis `a` between a context node
/// (columns `pre_c`, `size_c`, `level_c`, `frag_c`) and a target node
/// (columns `pre`, `size`, `level`, `kind`, `frag`).
pub fn axis_predicate(axis: Axis) -> AxisPredicate {
    use CmpOp::*;
    let col = |c: &str| Term::Col(c.into());
    let atom = |l: Term, op: CmpOp, r: Term| Atom { lhs: l, op, rhs: r };
    // pre_c < pre <= pre_c + size_c
    let below_ctx = |strict: bool| {
        vec![
            atom(col(CTX_PRE), if strict { Lt } else { Le }, col("pre")),
            atom(col("pre"), Le, Term::ColPlusCol(CTX_PRE.into(), CTX_SIZE.into())),
        ]
    };
    // pre < pre_c <= pre + size
    let above_ctx = |strict: bool| {
        vec![
            atom(col("pre"), if strict { Lt } else { Le }, col(CTX_PRE)),
            atom(col(CTX_PRE), Le, Term::ColPlusCol("pre".into(), "size".into())),
        ]
    };
    let same_frag = atom(col("frag"), Eq, col(CTX_FRAG));
    let (conjuncts, context_cols) = match axis {
        Axis::Child => {
            let mut v = below_ctx(true);
            v.push(atom(Term::ColPlusConst(CTX_LEVEL.into(), 1), Eq, col("level")));
            (v, vec![CTX_PRE, CTX_SIZE, CTX_LEVEL])
        }
        Axis::Descendant => (below_ctx(true), vec![CTX_PRE, CTX_SIZE]),
        Axis::DescendantOrSelf => (below_ctx(false), vec![CTX_PRE, CTX_SIZE]),
        Axis::SelfAxis => (vec![atom(col("pre"), Eq, col(CTX_PRE))], vec![CTX_PRE]),
        Axis::Parent => {
            let mut v = above_ctx(true);
            v.push(atom(Term::ColPlusConst("level".into(), 1), Eq, col(CTX_LEVEL)));
            (v, vec![CTX_PRE, CTX_LEVEL])
        }
        Axis::Ancestor => (above_ctx(true), vec![CTX_PRE]),
        Axis::AncestorOrSelf => (above_ctx(false), vec![CTX_PRE]),
        Axis::Following => (
            vec![
                atom(Term::ColPlusCol(CTX_PRE.into(), CTX_SIZE.into()), Lt, col("pre")),
                same_frag,
            ],
            vec![CTX_PRE, CTX_SIZE, CTX_FRAG],
        ),
        Axis::Preceding => (
            vec![atom(Term::ColPlusCol("pre".into(), "size".into()), Lt, col(CTX_PRE)), same_frag],
            vec![CTX_PRE, CTX_FRAG],
        ),
        Axis::Attribute => {
            // The owner/attribute relationship is the child range narrowed
            // to attribute rows.
            let mut v = below_ctx(true);
            v.push(atom(Term::ColPlusConst(CTX_LEVEL.into(), 1), Eq, col("level")));
            v.push(atom(col("kind"), Eq, Term::Const(Value::Kind(NodeKind::Attr))));
            (v, vec![CTX_PRE, CTX_SIZE, CTX_LEVEL])
        }
    };
    AxisPredicate { axis, conjuncts: Predicate::new(conjuncts), context_cols }
}

/// Kind and name tests.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeTest {
    /// `name` or `*` on a non-attribute axis.
    Element(Option<String>),
    /// `name` or `*` on the attribute axis.
    Attribute(Option<String>),
    Text,
    AnyNode,
    Document,
}

impl NodeTest {
    /// Returns the (kind conjunct, name conjunct); `None` means `true`.
    pub fn predicates(&self) -> (Option<Atom>, Option<Atom>) {
        let kind = |k: NodeKind| Atom::col_eq_const("kind", Value::Kind(k));
        let name = |n: &str| Atom::col_eq_const("name", Value::Str(n.to_string()));
        match self {
            NodeTest::Element(n) => (Some(kind(NodeKind::Elem)), n.as_deref().map(name)),
            NodeTest::Attribute(n) => (Some(kind(NodeKind::Attr)), n.as_deref().map(name)),
            NodeTest::Text => (Some(kind(NodeKind::Text)), None),
            NodeTest::AnyNode => (None, None),
            NodeTest::Document => (Some(kind(NodeKind::Doc)), None),
        }
    }

    pub fn render(&self) -> String {
        match self {
            NodeTest::Element(Some(n)) | NodeTest::Attribute(Some(n)) => n.clone(),
            NodeTest::Element(None) | NodeTest::Attribute(None) => "*".into(),
            NodeTest::Text => "text()".into(),
            NodeTest::AnyNode => "node()".into(),
            NodeTest::Document => "document-node()".into(),
        }
    }
}

/// Decides whether `target` is on `axis` of `ctx` by walking the tree
/// structure (parent pointers). This is the independent reference the range
/// predicates are tested against.
pub fn axis_holds_tree(doc: &DocTable, axis: Axis, ctx: u32, target: u32) -> bool {
    let is_ancestor = |a: u32, mut n: u32| -> bool {
        while let Some(p) = doc.parent[n as usize] {
            if p == a {
                return true;
            }
            n = p;
        }
        false
    };
    let same_frag = doc.rows[ctx as usize].frag == doc.rows[target as usize].frag;
    match axis {
        Axis::SelfAxis => ctx == target,
        Axis::Child => doc.parent[target as usize] == Some(ctx),
        Axis::Parent => doc.parent[ctx as usize] == Some(target),
        Axis::Descendant => is_ancestor(ctx, target),
        Axis::DescendantOrSelf => ctx == target || is_ancestor(ctx, target),
        Axis::Ancestor => is_ancestor(target, ctx),
        Axis::AncestorOrSelf => ctx == target || is_ancestor(target, ctx),
        Axis::Following => same_frag && target > ctx && !is_ancestor(ctx, target),
        Axis::Preceding => same_frag && target < ctx && !is_ancestor(target, ctx),
        Axis::Attribute => {
            doc.parent[target as usize] == Some(ctx) && doc.rows[target as usize].kind == NodeKind::Attr
        }
    }
}

/// Evaluates an axis predicate on a concrete (context, target) row pair.
pub fn axis_holds_encoded(doc: &DocTable, axis: Axis, ctx: u32, target: u32) -> bool {
    let c = &doc.rows[ctx as usize];
    let t = &doc.rows[target as usize];
    let lookup = |col: &str| -> i64 {
        match col {
            "pre" => t.pre as i64,
            "size" => t.size as i64,
            "level" => t.level as i64,
            "frag" => t.frag as i64,
            CTX_PRE => c.pre as i64,
            CTX_SIZE => c.size as i64,
            CTX_LEVEL => c.level as i64,
            CTX_FRAG => c.frag as i64,
            other => panic!("unexpected column {other}"),
        }
    };
    let term = |term: &Term| -> Value {
        match term {
            Term::Col(c) => {
                if c == "kind" {
                    Value::Kind(t.kind)
                } else {
                    Value::Int(lookup(c))
                }
            }
            Term::ColPlusCol(a, b) => Value::Int(lookup(a) + lookup(b)),
            Term::ColPlusConst(a, n) => Value::Int(lookup(a) + n),
            Term::Const(v) => v.clone(),
        }
    };
    axis_predicate(axis).conjuncts.atoms.iter().all(|a| {
        term(&a.lhs).cmp_sql(&term(&a.rhs)).map(|o| a.op.holds(o)).unwrap_or(false)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn fig_doc() -> DocTable {
        shred(corpus::AUCTION_XML, "auction.xml", 0).unwrap()
    }

    #[test]
    fn shreds_the_auction_document_exactly() {
        let doc = fig_doc();
        let got: Vec<(u32, u32, u32, NodeKind, Option<&str>, Option<&str>, Option<f64>)> = doc
            .rows
            .iter()
            .map(|r| (r.pre, r.size, r.level, r.kind, r.name.as_deref(), r.value.as_deref(), r.data))
            .collect();
        let expected = vec![
            (0, 9, 0, NodeKind::Doc, Some("auction.xml"), None, None),
            (1, 8, 1, NodeKind::Elem, Some("open_auction"), None, None),
            (2, 0, 2, NodeKind::Attr, Some("id"), Some("1"), Some(1.0)),
            (3, 1, 2, NodeKind::Elem, Some("initial"), Some("15"), Some(15.0)),
            (4, 0, 3, NodeKind::Text, None, Some("15"), Some(15.0)),
            (5, 4, 2, NodeKind::Elem, Some("bidder"), None, None),
            (6, 1, 3, NodeKind::Elem, Some("time"), Some("18:43"), None),
            (7, 0, 4, NodeKind::Text, None, Some("18:43"), None),
            (8, 1, 3, NodeKind::Elem, Some("increase"), Some("4.20"), Some(4.2)),
            (9, 0, 4, NodeKind::Text, None, Some("4.20"), Some(4.2)),
        ];
        assert_eq!(got, expected);
        doc.check_invariants().unwrap();
    }

    #[test]
    fn shreds_a_minimal_document() {
        let doc = shred("<a/>", "t.xml", 0).unwrap();
        assert_eq!(doc.rows.len(), 2);
        assert_eq!(doc.rows[0].kind, NodeKind::Doc);
        assert_eq!(doc.rows[0].name.as_deref(), Some("t.xml"));
        assert_eq!(doc.rows[0].size, 1);
        assert_eq!(doc.rows[1].kind, NodeKind::Elem);
        assert_eq!(doc.rows[1].name.as_deref(), Some("a"));
        assert_eq!((doc.rows[1].size, doc.rows[1].level), (0, 1));
    }

    #[test]
    fn decimal_casts() {
        assert_eq!(decimal_cast("4.20"), Some(4.2));
        assert_eq!(decimal_cast("15"), Some(15.0));
        assert_eq!(decimal_cast("-3.5"), Some(-3.5));
        assert_eq!(decimal_cast("+7"), Some(7.0));
        assert_eq!(decimal_cast("18:43"), None);
        assert_eq!(decimal_cast("4."), None);
        assert_eq!(decimal_cast(""), None);
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let err = shred("<a><b></a>", "t.xml", 0).unwrap_err();
        match err {
            InfosetError::Parse { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn serialize_subtrees() {
        let doc = fig_doc();
        assert_eq!(doc.serialize(&[6]).unwrap(), "<time>18:43</time>");
        assert_eq!(doc.serialize(&[]).unwrap(), "");
        assert_eq!(doc.serialize(&[4]).unwrap(), "15");
        assert_eq!(doc.serialize(&[2]).unwrap(), "id=\"1\"");
        assert!(matches!(doc.serialize(&[99]), Err(InfosetError::UnknownPre(99))));
    }

    #[test]
    fn roundtrip_reshreds_to_the_same_table() {
        for (text, uri) in [
            (corpus::AUCTION_XML, "auction.xml"),
            (corpus::SITE_XML, "site.xml"),
            (corpus::NESTED_XML, "nested.xml"),
        ] {
            let doc = shred(text, uri, 0).unwrap();
            let root = 1; // root element sits right after the DOC row
            let xml2 = doc.serialize(&[root]).unwrap();
            let doc2 = shred(&xml2, uri, 0).unwrap();
            assert_eq!(doc.rows, doc2.rows, "round-trip changed the encoding of {uri}");
        }
    }

    #[test]
    fn axis_predicates_match_tree_walk_exhaustively() {
        // Two documents in one table so the horizontal axes see several
        // fragments.
        let mut doc = shred(corpus::NESTED_XML, "nested.xml", 0).unwrap();
        let other = shred(corpus::AUCTION_XML, "auction.xml", 1).unwrap();
        doc.append(&other);
        assert!(doc.rows.len() <= 200);
        for axis in SUPPORTED_AXES {
            for ctx in 0..doc.rows.len() as u32 {
                for target in 0..doc.rows.len() as u32 {
                    let tree = axis_holds_tree(&doc, axis, ctx, target);
                    let enc = axis_holds_encoded(&doc, axis, ctx, target);
                    assert_eq!(
                        tree, enc,
                        "axis {} disagrees for ctx {ctx}, target {target}",
                        axis.name()
                    );
                }
            }
        }
    }

    #[test]
    fn child_axis_conjuncts() {
        let p = axis_predicate(Axis::Child);
        assert_eq!(p.conjuncts.atoms.len(), 3);
        assert_eq!(format!("{}", p.conjuncts), "pre_c < pre & pre <= pre_c+size_c & level_c+1 = level");
    }

    #[test]
    fn preceding_uses_the_dual_range_and_fragment_equality() {
        let p = axis_predicate(Axis::Preceding);
        assert_eq!(format!("{}", p.conjuncts), "pre+size < pre_c & frag = frag_c");
    }

    #[test]
    fn sibling_axes_are_rejected() {
        assert!(matches!(Axis::parse("following-sibling"), Err(InfosetError::UnsupportedAxis(_))));
    }

    #[test]
    fn node_test_predicates() {
        let (k, n) = NodeTest::Element(Some("bidder".into())).predicates();
        assert_eq!(k, Some(Atom::col_eq_const("kind", Value::Kind(NodeKind::Elem))));
        assert_eq!(n, Some(Atom::col_eq_const("name", Value::Str("bidder".into()))));
        let (k, n) = NodeTest::Text.predicates();
        assert_eq!(k, Some(Atom::col_eq_const("kind", Value::Kind(NodeKind::Text))));
        assert_eq!(n, None);
        assert_eq!(NodeTest::AnyNode.predicates(), (None, None));
    }

    #[test]
    fn csv_roundtrip() {
        let doc = fig_doc();
        let csv = doc.to_csv();
        assert!(csv.starts_with("pre,size,level,kind,name,value,data,frag"));
        let back = DocTable::from_csv(&csv).unwrap();
        assert_eq!(doc.rows, back.rows);
        assert_eq!(doc.parent, back.parent);
    }
}
