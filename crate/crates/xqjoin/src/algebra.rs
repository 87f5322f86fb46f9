//! The table algebra IR: a rooted DAG of operators with shared subplans.
//!
//! Plans live in a [`PlanStore`], an append-only arena with hash-consing:
//! structurally identical nodes receive the same [`NodeId`], so identical
//! subplans unify automatically and the document table appears as a single
//! shared leaf. Operands always have smaller ids than their consumers, which
//! makes ascending id order a topological order and rules out cycles by
//! construction.
//!
//! Rewrites never mutate a node; they build replacement nodes and re-hang the
//! ancestors, so one consumer of a shared node can be rewritten without
//! affecting the others.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::infoset::NodeKind;

/// Column names are plain strings ("iter", "pos", "item", "pre", ...).
pub type Col = String;

/// A table cell. `Null` stands for an absent value/data field.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Dec(f64),
    Str(String),
    Kind(NodeKind),
    Null,
}

impl Value {
    fn tag(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Dec(_) => 1,
            Value::Str(_) => 2,
            Value::Kind(_) => 3,
            Value::Null => 4,
        }
    }

    /// SQL-style comparison used by predicates: comparing against `Null`
    /// yields no ordering (the row fails the predicate), ints and decimals
    /// compare numerically, strings lexicographically.
    pub fn cmp_sql(&self, other: &Value) -> Option<std::cmp::Ordering> {
        use Value::*;
        match (self, other) {
            (Null, _) | (_, Null) => None,
            (Int(a), Int(b)) => Some(a.cmp(b)),
            (Dec(a), Dec(b)) => a.partial_cmp(b),
            (Int(a), Dec(b)) => (*a as f64).partial_cmp(b),
            (Dec(a), Int(b)) => a.partial_cmp(&(*b as f64)),
            (Str(a), Str(b)) => Some(a.cmp(b)),
            (Kind(a), Kind(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Dec(a), Dec(b)) => a.to_bits() == b.to_bits(),
            (Str(a), Str(b)) => a == b,
            (Kind(a), Kind(b)) => a == b,
            (Null, Null) => true,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.tag().hash(state);
        match self {
            Value::Int(n) => n.hash(state),
            Value::Dec(d) => d.to_bits().hash(state),
            Value::Str(s) => s.hash(state),
            Value::Kind(k) => k.hash(state),
            Value::Null => {}
        }
    }
}

/// Total order used when sorting table rows (rank keys, stable dumps).
/// Columns are type-homogeneous in practice; mixed variants order by tag.
impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Dec(a), Dec(b)) => a.partial_cmp(b).unwrap_or_else(|| a.to_bits().cmp(&b.to_bits())),
            (Int(a), Dec(b)) => (*a as f64).partial_cmp(b).unwrap_or(std::cmp::Ordering::Less),
            (Dec(a), Int(b)) => a.partial_cmp(&(*b as f64)).unwrap_or(std::cmp::Ordering::Greater),
            (Str(a), Str(b)) => a.cmp(b),
            (Kind(a), Kind(b)) => a.cmp(b),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Dec(d) => write!(f, "{d:?}"),
            Value::Str(s) => write!(f, "'{s}'"),
            Value::Kind(k) => write!(f, "{k}"),
            Value::Null => write!(f, "-"),
        }
    }
}

/// One side of a predicate atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Col(Col),
    /// Computed endpoint `a + b`, e.g. `pre_c + size_c`.
    ColPlusCol(Col, Col),
    /// Computed endpoint `a + n`, e.g. `level_c + 1`.
    ColPlusConst(Col, i64),
    Const(Value),
}

impl Term {
    pub fn cols(&self) -> Vec<&Col> {
        match self {
            Term::Col(c) => vec![c],
            Term::ColPlusCol(a, b) => vec![a, b],
            Term::ColPlusConst(a, _) => vec![a],
            Term::Const(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl Atom {
    pub fn col_eq_col(a: &str, b: &str) -> Atom {
        Atom { lhs: Term::Col(a.into()), op: CmpOp::Eq, rhs: Term::Col(b.into()) }
    }

    pub fn col_eq_const(a: &str, v: Value) -> Atom {
        Atom { lhs: Term::Col(a.into()), op: CmpOp::Eq, rhs: Term::Const(v) }
    }
}

/// A conjunction of comparison atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
}

impl Predicate {
    pub fn new(atoms: Vec<Atom>) -> Predicate {
        Predicate { atoms }
    }

    pub fn cols(&self) -> HashSet<Col> {
        let mut out = HashSet::new();
        for a in &self.atoms {
            for c in a.lhs.cols().into_iter().chain(a.rhs.cols()) {
                out.insert(c.clone());
            }
        }
        out
    }

    /// The single `a = b` column equality, if this predicate is exactly that.
    pub fn as_col_equality(&self) -> Option<(&Col, &Col)> {
        if self.atoms.len() != 1 {
            return None;
        }
        let a = &self.atoms[0];
        match (&a.lhs, a.op, &a.rhs) {
            (Term::Col(l), CmpOp::Eq, Term::Col(r)) => Some((l, r)),
            _ => None,
        }
    }

    /// Rewrites every column reference through `f`.
    pub fn map_cols(&self, f: &dyn Fn(&Col) -> Col) -> Predicate {
        let map_term = |t: &Term| match t {
            Term::Col(c) => Term::Col(f(c)),
            Term::ColPlusCol(a, b) => Term::ColPlusCol(f(a), f(b)),
            Term::ColPlusConst(a, n) => Term::ColPlusConst(f(a), *n),
            Term::Const(v) => Term::Const(v.clone()),
        };
        Predicate {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { lhs: map_term(&a.lhs), op: a.op, rhs: map_term(&a.rhs) })
                .collect(),
        }
    }
}

impl std::fmt::Display for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let term = |t: &Term| match t {
            Term::Col(c) => c.clone(),
            Term::ColPlusCol(a, b) => format!("{a}+{b}"),
            Term::ColPlusConst(a, n) => format!("{a}+{n}"),
            Term::Const(v) => v.to_string(),
        };
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{} {} {}", term(&a.lhs), a.op.symbol(), term(&a.rhs)))
            .collect();
        write!(f, "{}", parts.join(" & "))
    }
}

/// Node identity within a [`PlanStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// The operator variants of the algebra dialect.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operator {
    /// Serialization point, the unique plan root.
    Ser { child: NodeId },
    /// Project onto sources, renaming each to its target: `(target, source)`.
    Project { child: NodeId, mappings: Vec<(Col, Col)> },
    Select { child: NodeId, pred: Predicate },
    Join { left: NodeId, right: NodeId, pred: Predicate },
    Cross { left: NodeId, right: NodeId },
    Distinct { child: NodeId },
    /// Attach a constant column.
    Attach { child: NodeId, col: Col, value: Value },
    /// Attach a unique row id.
    RowId { child: NodeId, col: Col },
    /// Attach the SQL:1999 `RANK() OVER (ORDER BY order_by)` in `col`.
    Rank { child: NodeId, col: Col, order_by: Vec<Col> },
    /// The XML infoset encoding table.
    DocRef,
    LitTable { cols: Vec<Col>, rows: Vec<Vec<Value>> },
}

impl Operator {
    pub fn operands(&self) -> Vec<NodeId> {
        match self {
            Operator::Ser { child }
            | Operator::Project { child, .. }
            | Operator::Select { child, .. }
            | Operator::Distinct { child }
            | Operator::Attach { child, .. }
            | Operator::RowId { child, .. }
            | Operator::Rank { child, .. } => vec![*child],
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                vec![*left, *right]
            }
            Operator::DocRef | Operator::LitTable { .. } => vec![],
        }
    }

    pub fn with_operands(&self, ops: &[NodeId]) -> Operator {
        let mut o = self.clone();
        match &mut o {
            Operator::Ser { child }
            | Operator::Project { child, .. }
            | Operator::Select { child, .. }
            | Operator::Distinct { child }
            | Operator::Attach { child, .. }
            | Operator::RowId { child, .. }
            | Operator::Rank { child, .. } => *child = ops[0],
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                *left = ops[0];
                *right = ops[1];
            }
            Operator::DocRef | Operator::LitTable { .. } => {}
        }
        o
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Operator::Ser { .. } => "ser",
            Operator::Project { .. } => "project",
            Operator::Select { .. } => "select",
            Operator::Join { .. } => "join",
            Operator::Cross { .. } => "cross",
            Operator::Distinct { .. } => "distinct",
            Operator::Attach { .. } => "attach",
            Operator::RowId { .. } => "rowid",
            Operator::Rank { .. } => "rank",
            Operator::DocRef => "doc",
            Operator::LitTable { .. } => "lit",
        }
    }
}

/// Fixed output schema of the document table.
pub const DOC_COLS: [&str; 8] = ["pre", "size", "level", "kind", "name", "value", "data", "frag"];

/// Hash-consing arena for plan nodes.
#[derive(Debug, Clone, Default)]
pub struct PlanStore {
    nodes: Vec<Operator>,
    schemas: Vec<Vec<Col>>,
    index: HashMap<Operator, NodeId>,
}

impl PlanStore {
    pub fn new() -> PlanStore {
        PlanStore::default()
    }

    pub fn add(&mut self, op: Operator) -> NodeId {
        if let Some(id) = self.index.get(&op) {
            return *id;
        }
        for o in op.operands() {
            assert!((o.0 as usize) < self.nodes.len(), "operand created after consumer");
        }
        let schema = self.compute_schema(&op);
        let id = NodeId(self.nodes.len() as u32);
        self.index.insert(op.clone(), id);
        self.nodes.push(op);
        self.schemas.push(schema);
        id
    }

    pub fn op(&self, id: NodeId) -> &Operator {
        &self.nodes[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Output column list of a node, in deterministic order.
    pub fn cols(&self, id: NodeId) -> &[Col] {
        &self.schemas[id.0 as usize]
    }

    pub fn col_set(&self, id: NodeId) -> HashSet<Col> {
        self.cols(id).iter().cloned().collect()
    }

    fn compute_schema(&self, op: &Operator) -> Vec<Col> {
        match op {
            Operator::Ser { .. } => vec!["pos".into(), "item".into()],
            Operator::Project { mappings, .. } => mappings.iter().map(|(t, _)| t.clone()).collect(),
            Operator::Select { child, .. } => self.cols(*child).to_vec(),
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                let mut cols = self.cols(*left).to_vec();
                for c in self.cols(*right) {
                    if !cols.contains(c) {
                        cols.push(c.clone());
                    }
                }
                cols
            }
            Operator::Distinct { child } => self.cols(*child).to_vec(),
            Operator::Attach { child, col, .. } => {
                let mut cols = self.cols(*child).to_vec();
                cols.push(col.clone());
                cols
            }
            Operator::RowId { child, col } => {
                let mut cols = self.cols(*child).to_vec();
                cols.push(col.clone());
                cols
            }
            Operator::Rank { child, col, .. } => {
                let mut cols = self.cols(*child).to_vec();
                cols.push(col.clone());
                cols
            }
            Operator::DocRef => DOC_COLS.iter().map(|c| c.to_string()).collect(),
            Operator::LitTable { cols, .. } => cols.clone(),
        }
    }

    /// All nodes reachable from `root`, ascending id order (topological).
    pub fn reachable_set(&self, root: NodeId) -> Vec<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.op(n).operands());
            }
        }
        let mut v: Vec<NodeId> = seen.into_iter().collect();
        v.sort();
        v
    }

    /// Replaces node `from` by `to` everywhere below `root`, rebuilding the
    /// ancestors. Shared structure outside the affected paths is reused.
    pub fn substitute(&mut self, root: NodeId, from: NodeId, to: NodeId) -> NodeId {
        let mut memo: HashMap<NodeId, NodeId> = HashMap::new();
        memo.insert(from, to);
        self.substitute_rec(root, &mut memo)
    }

    fn substitute_rec(&mut self, n: NodeId, memo: &mut HashMap<NodeId, NodeId>) -> NodeId {
        if let Some(r) = memo.get(&n) {
            return *r;
        }
        let ops = self.op(n).operands();
        let new_ops: Vec<NodeId> = ops.iter().map(|o| self.substitute_rec(*o, memo)).collect();
        let result = if new_ops == ops { n } else { self.add(self.op(n).with_operands(&new_ops)) };
        memo.insert(n, result);
        result
    }
}

/// A rooted plan over a shared node store.
#[derive(Debug, Clone)]
pub struct Plan {
    pub store: PlanStore,
    pub root: NodeId,
}

impl Plan {
    pub fn op(&self, id: NodeId) -> &Operator {
        self.store.op(id)
    }

    pub fn cols(&self, id: NodeId) -> &[Col] {
        self.store.cols(id)
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.store.reachable_set(self.root)
    }

    pub fn operator_count(&self) -> usize {
        self.nodes().len()
    }

    /// True iff `a` is in the operand sub-DAG of `b` (reflexive).
    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        if a == b {
            return true;
        }
        if a > b {
            // Operands always have smaller ids.
            return false;
        }
        let mut stack = vec![b];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == a {
                return true;
            }
            if seen.insert(n) {
                for o in self.op(n).operands() {
                    if o >= a {
                        stack.push(o);
                    }
                }
            }
        }
        false
    }

    /// Longest distance from the root, per node. Used to pick the leaf-most
    /// rewrite site first.
    pub fn depths(&self) -> HashMap<NodeId, usize> {
        let nodes = self.nodes();
        let mut depth: HashMap<NodeId, usize> = HashMap::new();
        depth.insert(self.root, 0);
        for n in nodes.iter().rev() {
            let d = *depth.get(n).unwrap_or(&0);
            for o in self.op(*n).operands() {
                let e = depth.entry(o).or_insert(0);
                *e = (*e).max(d + 1);
            }
        }
        depth
    }

    /// Schema validation; returns all violations, never panics.
    pub fn validate(&self) -> Vec<String> {
        self.store.validate_rooted(self.root, true)
    }

    /// Validates a plan fragment that is not required to be `ser`-rooted.
    pub fn validate_fragment(&self) -> Vec<String> {
        self.store.validate_rooted(self.root, false)
    }
}

/// Where a column's values come from: a generating node (leaf, row id, or
/// rank), or a constant. Two columns with the same origin carry the same
/// value on rows derived from one base row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColOrigin {
    Node(NodeId, Col),
    Const(Value),
}

impl PlanStore {
    /// Traces a column through renames, filters, and joins to its origin.
    pub fn col_origin(&self, node: NodeId, col: &Col) -> ColOrigin {
        match self.op(node) {
            Operator::DocRef => ColOrigin::Node(node, col.clone()),
            Operator::LitTable { cols, rows } => {
                if rows.len() == 1 {
                    let i = cols.iter().position(|c| c == col).expect("column exists");
                    ColOrigin::Const(rows[0][i].clone())
                } else {
                    ColOrigin::Node(node, col.clone())
                }
            }
            Operator::Project { child, mappings } => {
                match mappings.iter().find(|(t, _)| t == col) {
                    // Identity mappings pass through; a rename binds the
                    // value anew, so the projection node is the origin.
                    Some((t, s)) if t == s => self.col_origin(*child, s),
                    _ => ColOrigin::Node(node, col.clone()),
                }
            }
            Operator::Select { child, .. }
            | Operator::Distinct { child }
            | Operator::Ser { child } => self.col_origin(*child, col),
            Operator::Attach { child, col: c, value } => {
                if c == col {
                    ColOrigin::Const(value.clone())
                } else {
                    self.col_origin(*child, col)
                }
            }
            Operator::RowId { child, col: c } | Operator::Rank { child, col: c, .. } => {
                if c == col {
                    ColOrigin::Node(node, col.clone())
                } else {
                    self.col_origin(*child, col)
                }
            }
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                if self.cols(*left).contains(col) {
                    self.col_origin(*left, col)
                } else {
                    self.col_origin(*right, col)
                }
            }
        }
    }

    /// Schema validation of the sub-DAG under `root`.
    pub fn validate_rooted(&self, root: NodeId, require_ser_root: bool) -> Vec<String> {
        let mut errs = Vec::new();
        let nodes = self.reachable_set(root);
        if require_ser_root && !matches!(self.op(root), Operator::Ser { .. }) {
            errs.push(format!("root {root} is not ser"));
        }
        for &n in &nodes {
            let op = self.op(n);
            if matches!(op, Operator::Ser { .. }) && n != root {
                errs.push(format!("{n}: ser below the root"));
            }
            self.validate_node(n, op, &mut errs);
        }
        errs
    }

    fn validate_node(&self, n: NodeId, op: &Operator, errs: &mut Vec<String>) {
        let have = |child: NodeId, col: &Col| self.cols(child).contains(col);
        match op {
            Operator::Project { child, mappings } => {
                let mut targets = HashSet::new();
                for (t, s) in mappings {
                    if !targets.insert(t) {
                        errs.push(format!("{n}: duplicate projection target {t}"));
                    }
                    if !have(*child, s) {
                        errs.push(format!("{n}: projection source {s} missing in {child}"));
                    }
                }
                if mappings.is_empty() {
                    errs.push(format!("{n}: empty projection"));
                }
            }
            Operator::Select { child, pred } => {
                for c in pred.cols() {
                    if !have(*child, &c) {
                        errs.push(format!("{n}: predicate column {c} missing in {child}"));
                    }
                }
            }
            Operator::Join { left, right, pred } => {
                let merged = self.col_set_of_join(*left, *right);
                for c in pred.cols() {
                    if !merged.contains(&c) {
                        errs.push(format!("{n}: predicate column {c} missing in join operands"));
                    }
                }
                // Operands may overlap only where both sides provably carry
                // the same values: either the predicate equates the shared
                // column with itself, or both sides trace it to one origin.
                // Joins collapsing onto a shared node rely on this.
                let l = self.col_set(*left);
                for c in self.cols(*right) {
                    if !l.contains(c) {
                        continue;
                    }
                    let equated = pred.atoms.iter().any(|a| {
                        a.op == CmpOp::Eq
                            && a.lhs == Term::Col(c.clone())
                            && a.rhs == Term::Col(c.clone())
                    });
                    if !equated && self.col_origin(*left, c) != self.col_origin(*right, c) {
                        errs.push(format!(
                            "{n}: shared column {c} has diverging origins in the join operands"
                        ));
                    }
                }
            }
            Operator::Cross { left, right } => {
                let l = self.col_set(*left);
                for c in self.cols(*right) {
                    if l.contains(c) {
                        errs.push(format!("{n}: column {c} appears in both cross operands"));
                    }
                }
            }
            Operator::Attach { child, col, .. } | Operator::RowId { child, col } => {
                if have(*child, col) {
                    errs.push(format!("{n}: attached column {col} already exists in {child}"));
                }
            }
            Operator::Rank { child, col, order_by } => {
                if have(*child, col) {
                    errs.push(format!("{n}: rank column {col} already exists in {child}"));
                }
                for c in order_by {
                    if !have(*child, c) {
                        errs.push(format!("{n}: rank order column {c} missing in {child}"));
                    }
                }
            }
            Operator::LitTable { cols, rows } => {
                let mut seen = HashSet::new();
                for c in cols {
                    if !seen.insert(c) {
                        errs.push(format!("{n}: duplicate literal column {c}"));
                    }
                }
                for r in rows {
                    if r.len() != cols.len() {
                        errs.push(format!("{n}: literal row width mismatch"));
                    }
                }
            }
            _ => {}
        }
    }

    fn col_set_of_join(&self, left: NodeId, right: NodeId) -> HashSet<Col> {
        let mut s = self.col_set(left);
        s.extend(self.cols(right).iter().cloned());
        s
    }
}

impl Plan {
    /// Stable structured-text dump: one node per line, ids renumbered in a
    /// deterministic traversal so the text does not depend on construction
    /// history.
    pub fn dump(&self) -> String {
        let order = self.dump_order();
        let number: HashMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut out = String::new();
        for n in &order {
            let op = self.op(*n);
            let operands: Vec<String> =
                op.operands().iter().map(|o| format!("n{}", number[o])).collect();
            let params = self.dump_params(op);
            let _ = writeln!(
                out,
                "n{} {}{}{}{}",
                number[n],
                op.kind_name(),
                if params.is_empty() { "" } else { " " },
                params,
                if operands.is_empty() {
                    String::new()
                } else {
                    format!(" <- {}", operands.join(" "))
                }
            );
        }
        out
    }

    fn dump_params(&self, op: &Operator) -> String {
        match op {
            Operator::Project { mappings, .. } => mappings
                .iter()
                .map(|(t, s)| if t == s { t.clone() } else { format!("{t}:{s}") })
                .collect::<Vec<_>>()
                .join(","),
            Operator::Select { pred, .. } | Operator::Join { pred, .. } => format!("[{pred}]"),
            Operator::Attach { col, value, .. } => format!("{col}:{value}"),
            Operator::RowId { col, .. } => col.clone(),
            Operator::Rank { col, order_by, .. } => {
                format!("{col}:<{}>", order_by.join(","))
            }
            Operator::LitTable { cols, rows } => {
                let rows: Vec<String> = rows
                    .iter()
                    .map(|r| {
                        let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                        format!("({})", vals.join(","))
                    })
                    .collect();
                format!("({}) {}", cols.join(","), rows.join(" "))
            }
            _ => String::new(),
        }
    }

    /// Deterministic node order for dumps: post-order DFS from the root.
    pub fn dump_order(&self) -> Vec<NodeId> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        fn walk(p: &Plan, n: NodeId, seen: &mut HashSet<NodeId>, order: &mut Vec<NodeId>) {
            if !seen.insert(n) {
                return;
            }
            for o in p.op(n).operands() {
                walk(p, o, seen, order);
            }
            order.push(n);
        }
        walk(self, self.root, &mut seen, &mut order);
        order
    }

    /// Graph-description export (Graphviz dot) for visualization.
    pub fn to_dot(&self) -> String {
        let order = self.dump_order();
        let number: HashMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut out = String::from("digraph plan {\n  node [shape=box];\n");
        for n in &order {
            let op = self.op(*n);
            let mut label = op.kind_name().to_string();
            let params = self.dump_params(op);
            if !params.is_empty() {
                label.push(' ');
                label.push_str(&params);
            }
            let label = label.replace('"', "\\\"");
            let _ = writeln!(out, "  n{} [label=\"{}\"];", number[n], label);
            for o in op.operands() {
                let _ = writeln!(out, "  n{} -> n{};", number[n], number[&o]);
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_plan() -> (PlanStore, NodeId) {
        let mut s = PlanStore::new();
        let d = s.add(Operator::DocRef);
        (s, d)
    }

    #[test]
    fn cols_of_attach_over_literal() {
        let mut s = PlanStore::new();
        let lit = s.add(Operator::LitTable { cols: vec!["pos".into()], rows: vec![vec![Value::Int(1)]] });
        let at = s.add(Operator::Attach { child: lit, col: "iter".into(), value: Value::Int(1) });
        let mut cols = s.cols(at).to_vec();
        cols.sort();
        assert_eq!(cols, vec!["iter".to_string(), "pos".to_string()]);
    }

    #[test]
    fn cols_of_doc_and_project() {
        let (mut s, d) = doc_plan();
        assert_eq!(s.cols(d), &DOC_COLS.map(String::from));
        let p = s.add(Operator::Project { child: d, mappings: vec![("item".into(), "pre".into())] });
        assert_eq!(s.cols(p), &["item".to_string()]);
    }

    #[test]
    fn hash_consing_unifies_identical_subplans() {
        let (mut s, d) = doc_plan();
        let a = s.add(Operator::Select {
            child: d,
            pred: Predicate::new(vec![Atom::col_eq_const("kind", Value::Kind(NodeKind::Elem))]),
        });
        let b = s.add(Operator::Select {
            child: d,
            pred: Predicate::new(vec![Atom::col_eq_const("kind", Value::Kind(NodeKind::Elem))]),
        });
        assert_eq!(a, b);
        assert_eq!(s.add(Operator::DocRef), d);
    }

    #[test]
    fn validate_flags_cross_overlap_and_bad_rank() {
        let (mut s, d) = doc_plan();
        let x = s.add(Operator::Cross { left: d, right: d });
        let plan = Plan { store: s.clone(), root: x };
        let errs = plan.validate_fragment();
        assert!(errs.iter().any(|e| e.contains("both cross operands")), "{errs:?}");

        let r = s.add(Operator::Rank { child: d, col: "pos".into(), order_by: vec!["nosuch".into()] });
        let plan = Plan { store: s, root: r };
        let errs = plan.validate_fragment();
        assert!(errs.iter().any(|e| e.contains("nosuch")), "{errs:?}");
    }

    #[test]
    fn reachability_is_reflexive_and_follows_operands() {
        let (mut s, d) = doc_plan();
        let p = s.add(Operator::Project { child: d, mappings: vec![("item".into(), "pre".into())] });
        let ser = s.add(Operator::Ser { child: p });
        let plan = Plan { store: s, root: ser };
        assert!(plan.reachable(d, ser));
        assert!(plan.reachable(d, d));
        assert!(!plan.reachable(ser, d));
    }

    #[test]
    fn substitute_rebuilds_only_affected_paths() {
        let (mut s, d) = doc_plan();
        let sel = s.add(Operator::Select {
            child: d,
            pred: Predicate::new(vec![Atom::col_eq_const("kind", Value::Kind(NodeKind::Doc))]),
        });
        let p1 = s.add(Operator::Project { child: sel, mappings: vec![("item".into(), "pre".into())] });
        let p2 = s.add(Operator::Project { child: d, mappings: vec![("item".into(), "pre".into())] });
        let join = s.add(Operator::Join { left: p1, right: p2, pred: Predicate::new(vec![]) });
        let new = s.substitute(join, sel, d);
        match s.op(new) {
            Operator::Join { left, right, .. } => {
                assert_eq!(*right, p2);
                assert_eq!(*left, p2, "rebuilt left branch unifies with the identical right branch");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
