//! SQL emission.
//!
//! An isolated plan splits at the serialization point into a *plan tail*
//! (projections, at most one rank, at most one duplicate elimination) over a
//! *join graph* (joins, cross products, selections, attaches, and
//! projections over document-table and literal leaves). Such a plan becomes
//! one `SELECT [DISTINCT] ... FROM ... WHERE ... ORDER BY` block: one
//! document-table alias per leaf occurrence on a root-to-leaf path, the
//! conjuncts in the `WHERE` clause, and the tail in the `DISTINCT` and
//! `ORDER BY` clauses.
//!
//! Plans that are not in normal form (stacked compiler output) are emitted
//! as a `WITH` chain with one named subquery per operator instead.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::algebra::{Atom, CmpOp, Col, NodeId, Operator, Plan, Predicate, Term, Value};

#[derive(Debug, Clone)]
pub struct SqlOptions {
    /// Name of the document encoding table.
    pub doc_table: String,
    /// Quote node-kind literals (`'ELEM'` instead of `ELEM`); needed for
    /// execution against a real engine, off for the readable rendering.
    pub quote_kinds: bool,
    /// When set, `pre + size` renders as this precomputed column instead of
    /// inline arithmetic.
    pub size_sum_column: Option<String>,
}

impl Default for SqlOptions {
    fn default() -> Self {
        SqlOptions { doc_table: "doc".into(), quote_kinds: false, size_sum_column: None }
    }
}

#[derive(Debug, Error)]
#[error("plan is not in join-graph normal form: {}", residuals.join("; "))]
pub struct NotIsolated {
    pub residuals: Vec<String>,
}

/// The tail/graph split of an isolated plan.
#[derive(Debug, Clone)]
pub struct NormalForm {
    /// Tail operators from the serialization point downwards.
    pub tail: Vec<NodeId>,
    /// Root of the join graph.
    pub graph: NodeId,
    pub distinct: bool,
    /// Ordering criteria in graph-root columns (the rank criteria, or the
    /// position source).
    pub order_cols: Vec<Col>,
    /// Graph-root column carrying the result items.
    pub item_col: Col,
}

/// Splits an isolated plan into plan tail and join graph, or reports the
/// operators blocking the single-block form.
pub fn to_normal_form(plan: &Plan) -> Result<NormalForm, NotIsolated> {
    let mut residuals = Vec::new();
    let Operator::Ser { child } = plan.op(plan.root) else {
        return Err(NotIsolated { residuals: vec!["root is not the serialization point".into()] });
    };
    let mut tail = vec![plan.root];
    let mut tracked_pos: Vec<Col> = vec!["pos".into()];
    let mut tracked_item: Col = "item".into();
    let mut distinct = false;
    let mut distincts = 0usize;
    let mut cursor = *child;
    loop {
        match plan.op(cursor) {
            Operator::Project { child, mappings } => {
                let map: HashMap<&Col, &Col> = mappings.iter().map(|(t, s)| (t, s)).collect();
                let mut ok = true;
                let mut through = |c: &Col| -> Col {
                    match map.get(c) {
                        Some(s) => (*s).clone(),
                        None => {
                            ok = false;
                            c.clone()
                        }
                    }
                };
                tracked_pos = tracked_pos.iter().map(&mut through).collect();
                tracked_item = through(&tracked_item);
                if !ok {
                    residuals.push(format!("tail projection {cursor} drops a tracked column"));
                    break;
                }
                tail.push(cursor);
                cursor = *child;
            }
            Operator::Rank { child, col, order_by } => {
                if tracked_item == *col {
                    residuals.push(format!("tail rank {cursor} produces the item column"));
                    break;
                }
                // Splice the ranking criteria into the position source.
                let mut next = Vec::new();
                for c in &tracked_pos {
                    if c == col {
                        next.extend(order_by.iter().cloned());
                    } else {
                        next.push(c.clone());
                    }
                }
                tracked_pos = next;
                tail.push(cursor);
                cursor = *child;
            }
            Operator::Distinct { child } => {
                distincts += 1;
                if distincts > 1 {
                    residuals.push(format!("second duplicate elimination {cursor} in the tail"));
                    break;
                }
                distinct = true;
                tail.push(cursor);
                cursor = *child;
            }
            _ => break,
        }
    }
    if !residuals.is_empty() {
        return Err(NotIsolated { residuals });
    }
    // Everything below the cursor must be pipelineable graph material.
    let graph = cursor;
    let mut stack = vec![graph];
    let mut seen = std::collections::HashSet::new();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        match plan.op(n) {
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                stack.push(*left);
                stack.push(*right);
            }
            Operator::Select { child, .. }
            | Operator::Project { child, .. }
            | Operator::Attach { child, .. } => stack.push(*child),
            Operator::DocRef => {}
            Operator::LitTable { rows, .. } => {
                if rows.len() > 1 {
                    residuals.push(format!("literal table {n} with several rows in the graph"));
                }
            }
            other => residuals.push(format!("{} {} inside the join graph", other.kind_name(), n)),
        }
    }
    if !residuals.is_empty() {
        return Err(NotIsolated { residuals });
    }
    Ok(NormalForm { tail, graph, distinct, order_cols: tracked_pos, item_col: tracked_item })
}

/// The residual list of `to_normal_form`, empty when the plan is isolated.
pub fn normal_form_residuals(plan: &Plan) -> Vec<String> {
    match to_normal_form(plan) {
        Ok(_) => Vec::new(),
        Err(e) => e.residuals,
    }
}

// ---------------------------------------------------------------------------
// Single-block emission
// ---------------------------------------------------------------------------

/// A column expression resolved against the discovered aliases.
#[derive(Debug, Clone, PartialEq)]
enum SqlTerm {
    Col(usize, Col),
    Const(Value),
    Sum(Box<SqlTerm>, Box<SqlTerm>),
    Plus(Box<SqlTerm>, i64),
}

#[derive(Debug, Clone)]
enum SqlConjunct {
    Cmp { lhs: SqlTerm, op: CmpOp, rhs: SqlTerm },
    /// `t BETWEEN low + 1 AND high` (or without the bump when inclusive).
    Between { t: SqlTerm, low: SqlTerm, bump: bool, high: SqlTerm },
}

/// The structured single-block query.
#[derive(Debug, Clone)]
pub struct SqlBlock {
    pub relations: Vec<(String, String)>,
    pub select: Vec<String>,
    pub distinct: bool,
    pub where_conjuncts: Vec<String>,
    pub order_by: Vec<String>,
}

impl SqlBlock {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "SELECT {}{}",
            if self.distinct { "DISTINCT " } else { "" },
            self.select.join(", ")
        );
        let rels: Vec<String> =
            self.relations.iter().map(|(alias, table)| format!("{table} AS {alias}")).collect();
        let _ = write!(out, "\n  FROM {}", rels.join(", "));
        for (i, c) in self.where_conjuncts.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "\n WHERE {c}");
            } else {
                let _ = write!(out, "\n   AND {c}");
            }
        }
        if !self.order_by.is_empty() {
            let _ = write!(out, "\n ORDER BY {}", self.order_by.join(", "));
        }
        out.push('\n');
        out
    }
}

struct GraphWalk<'a> {
    plan: &'a Plan,
    aliases: usize,
    conjuncts: Vec<SqlConjunct>,
}

type ColEnv = HashMap<Col, SqlTerm>;

impl<'a> GraphWalk<'a> {
    /// Depth-first expansion; every document leaf occurrence becomes a fresh
    /// alias (`d1`, `d2`, ... in discovery order). Join operands are visited
    /// context side (right) first, matching the order steps were compiled.
    fn walk(&mut self, n: NodeId) -> Result<ColEnv, NotIsolated> {
        match self.plan.op(n).clone() {
            Operator::DocRef => {
                self.aliases += 1;
                let a = self.aliases;
                Ok(crate::algebra::DOC_COLS
                    .iter()
                    .map(|c| (c.to_string(), SqlTerm::Col(a, c.to_string())))
                    .collect())
            }
            Operator::LitTable { cols, rows } => {
                if rows.len() != 1 {
                    return Err(NotIsolated {
                        residuals: vec![format!("literal table {n} with {} rows", rows.len())],
                    });
                }
                Ok(cols
                    .into_iter()
                    .zip(rows.into_iter().next().unwrap())
                    .map(|(c, v)| (c, SqlTerm::Const(v)))
                    .collect())
            }
            Operator::Attach { child, col, value } => {
                let mut env = self.walk(child)?;
                env.insert(col, SqlTerm::Const(value));
                Ok(env)
            }
            Operator::Project { child, mappings } => {
                let env = self.walk(child)?;
                let mut out = ColEnv::new();
                for (t, s) in mappings {
                    let term = env.get(&s).cloned().ok_or_else(|| NotIsolated {
                        residuals: vec![format!("column {s} missing below {n}")],
                    })?;
                    out.insert(t, term);
                }
                Ok(out)
            }
            Operator::Select { child, pred } => {
                let env = self.walk(child)?;
                self.push_pred(&pred, &env)?;
                Ok(env)
            }
            Operator::Join { left, right, pred } => {
                let right_env = self.walk(right)?;
                let left_env = self.walk(left)?;
                let mut env = right_env;
                for (c, t) in left_env {
                    match env.get(&c) {
                        Some(existing) if *existing != t => {
                            // Overlapping operands: the shared column must
                            // agree on both sides.
                            self.conjuncts.push(SqlConjunct::Cmp {
                                lhs: existing.clone(),
                                op: CmpOp::Eq,
                                rhs: t,
                            });
                        }
                        Some(_) => {}
                        None => {
                            env.insert(c, t);
                        }
                    }
                }
                self.push_pred(&pred, &env)?;
                Ok(env)
            }
            Operator::Cross { left, right } => {
                let right_env = self.walk(right)?;
                let left_env = self.walk(left)?;
                let mut env = right_env;
                for (c, t) in left_env {
                    env.entry(c).or_insert(t);
                }
                Ok(env)
            }
            other => Err(NotIsolated {
                residuals: vec![format!("{} {n} inside the join graph", other.kind_name())],
            }),
        }
    }

    fn term(&self, t: &Term, env: &ColEnv) -> Result<SqlTerm, NotIsolated> {
        let col = |c: &Col| -> Result<SqlTerm, NotIsolated> {
            env.get(c)
                .cloned()
                .ok_or_else(|| NotIsolated { residuals: vec![format!("unresolved column {c}")] })
        };
        Ok(match t {
            Term::Col(c) => col(c)?,
            Term::ColPlusCol(a, b) => SqlTerm::Sum(Box::new(col(a)?), Box::new(col(b)?)),
            Term::ColPlusConst(a, n) => SqlTerm::Plus(Box::new(col(a)?), *n),
            Term::Const(v) => SqlTerm::Const(v.clone()),
        })
    }

    fn push_pred(&mut self, pred: &Predicate, env: &ColEnv) -> Result<(), NotIsolated> {
        // Merge a strict/inclusive lower bound with its matching upper bound
        // into one range conjunct.
        let mut pending: Option<(SqlTerm, bool, SqlTerm)> = None; // (low, strict, t)
        for Atom { lhs, op, rhs } in &pred.atoms {
            let l = self.term(lhs, env)?;
            let r = self.term(rhs, env)?;
            if let Some((low, strict, t)) = pending.take() {
                // Expect `t <= low + size`.
                let merged = match (&l, *op, &r) {
                    (lt, CmpOp::Le, SqlTerm::Sum(a, _)) if *lt == t && **a == low => {
                        Some(SqlConjunct::Between { t: t.clone(), low: low.clone(), bump: strict, high: r.clone() })
                    }
                    _ => None,
                };
                match merged {
                    Some(c) => {
                        self.conjuncts.push(c);
                        continue;
                    }
                    None => self.conjuncts.push(SqlConjunct::Cmp {
                        lhs: low.clone(),
                        op: if strict { CmpOp::Lt } else { CmpOp::Le },
                        rhs: t,
                    }),
                }
            }
            if matches!(op, CmpOp::Lt | CmpOp::Le) && matches!(r, SqlTerm::Col(..)) {
                pending = Some((l, *op == CmpOp::Lt, r));
                continue;
            }
            self.conjuncts.push(SqlConjunct::Cmp { lhs: l, op: *op, rhs: r });
        }
        if let Some((low, strict, t)) = pending {
            self.conjuncts.push(SqlConjunct::Cmp {
                lhs: low,
                op: if strict { CmpOp::Lt } else { CmpOp::Le },
                rhs: t,
            });
        }
        Ok(())
    }
}

fn render_term(t: &SqlTerm, opts: &SqlOptions) -> String {
    match t {
        SqlTerm::Col(a, c) => format!("d{a}.{c}"),
        SqlTerm::Const(v) => render_value(v, opts),
        SqlTerm::Sum(a, b) => {
            if let (SqlTerm::Col(aa, ac), SqlTerm::Col(ba, bc)) = (&**a, &**b) {
                if aa == ba && ac == "pre" && bc == "size" {
                    if let Some(ps) = &opts.size_sum_column {
                        return format!("d{aa}.{ps}");
                    }
                }
            }
            format!("{} + {}", render_term(a, opts), render_term(b, opts))
        }
        SqlTerm::Plus(a, n) => format!("{} + {n}", render_term(a, opts)),
    }
}

fn render_value(v: &Value, opts: &SqlOptions) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Dec(d) => format!("{d:?}"),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Kind(k) => {
            if opts.quote_kinds {
                format!("'{}'", k.word())
            } else {
                k.word().to_string()
            }
        }
        Value::Null => "NULL".into(),
    }
}

fn render_conjunct(c: &SqlConjunct, opts: &SqlOptions) -> String {
    match c {
        SqlConjunct::Cmp { lhs, op, rhs } => {
            let sym = if *op == CmpOp::Eq { "=".to_string() } else { op.symbol().to_string() };
            format!("{} {} {}", render_term(lhs, opts), sym, render_term(rhs, opts))
        }
        SqlConjunct::Between { t, low, bump, high } => {
            let low = if *bump {
                format!("{} + 1", render_term(low, opts))
            } else {
                render_term(low, opts)
            };
            format!("{} BETWEEN {} AND {}", render_term(t, opts), low, render_term(high, opts))
        }
    }
}

/// Emits the single `SELECT`-block form of an isolated plan.
pub fn emit_single_block(plan: &Plan, opts: &SqlOptions) -> Result<SqlBlock, NotIsolated> {
    let nf = to_normal_form(plan)?;
    let mut walk = GraphWalk { plan, aliases: 0, conjuncts: Vec::new() };
    let env = walk.walk(nf.graph)?;
    let resolve = |c: &Col| -> Result<SqlTerm, NotIsolated> {
        env.get(c)
            .cloned()
            .ok_or_else(|| NotIsolated { residuals: vec![format!("unresolved tail column {c}")] })
    };
    let item = resolve(&nf.item_col)?;
    let SqlTerm::Col(item_alias, ref item_src) = item else {
        return Err(NotIsolated { residuals: vec!["result items are not a document column".into()] });
    };
    if item_src != "pre" {
        return Err(NotIsolated {
            residuals: vec![format!("result items resolve to {item_src}, not a pre rank")],
        });
    }

    // ORDER BY: the ordering criteria, the item column last; constants and
    // repetitions drop out.
    let mut order_terms: Vec<SqlTerm> = Vec::new();
    for c in nf.order_cols.iter() {
        let t = resolve(c)?;
        if matches!(t, SqlTerm::Const(_)) || order_terms.contains(&t) {
            continue;
        }
        order_terms.push(t);
    }
    if !order_terms.contains(&item) {
        order_terms.push(item.clone());
    }

    // SELECT: the item alias expands to its whole document row; any other
    // ordering keys ride along as named extras.
    let mut select = vec![format!("d{item_alias}.*")];
    let mut extra = 0usize;
    for t in &order_terms {
        if *t == item {
            continue;
        }
        if let SqlTerm::Col(a, c) = t {
            if *a == item_alias {
                continue;
            }
            extra += 1;
            select.push(format!("d{a}.{c} AS item{extra}"));
        }
    }

    let relations =
        (1..=walk.aliases).map(|i| (format!("d{i}"), opts.doc_table.clone())).collect();
    Ok(SqlBlock {
        relations,
        select,
        distinct: nf.distinct,
        where_conjuncts: walk.conjuncts.iter().map(|c| render_conjunct(c, opts)).collect(),
        order_by: order_terms.iter().map(|t| render_term(t, opts)).collect(),
    })
}

// ---------------------------------------------------------------------------
// Stacked emission (common table expression per operator)
// ---------------------------------------------------------------------------

/// Emits any validated plan as a `WITH` chain, one named subquery per
/// operator in topological order.
pub fn emit_stacked(plan: &Plan, opts: &SqlOptions) -> String {
    let nodes = plan.nodes();
    let number: HashMap<NodeId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (*n, i + 1)).collect();
    let tname = |n: NodeId| format!("t{}", number[&n]);
    let mut ctes: Vec<String> = Vec::new();
    let mut final_select = String::new();
    for &n in &nodes {
        let cols = plan.cols(n).to_vec();
        let body = match plan.op(n).clone() {
            Operator::DocRef => {
                format!("SELECT {} FROM {}", cols.join(", "), opts.doc_table)
            }
            Operator::LitTable { cols, rows } => {
                if rows.is_empty() {
                    let fields: Vec<String> =
                        cols.iter().map(|c| format!("NULL AS {c}")).collect();
                    format!("SELECT {} WHERE 1 = 0", fields.join(", "))
                } else {
                    rows.iter()
                        .map(|r| {
                            let fields: Vec<String> = cols
                                .iter()
                                .zip(r)
                                .map(|(c, v)| format!("{} AS {c}", render_value(v, opts)))
                                .collect();
                            format!("SELECT {}", fields.join(", "))
                        })
                        .collect::<Vec<_>>()
                        .join(" UNION ALL ")
                }
            }
            Operator::Ser { child } => {
                final_select = format!(
                    "SELECT pos, item FROM {} ORDER BY pos, item",
                    tname(child)
                );
                continue;
            }
            Operator::Project { child, mappings } => {
                let fields: Vec<String> = mappings
                    .iter()
                    .map(|(t, s)| if t == s { t.clone() } else { format!("{s} AS {t}") })
                    .collect();
                format!("SELECT {} FROM {}", fields.join(", "), tname(child))
            }
            Operator::Select { child, pred } => {
                format!(
                    "SELECT * FROM {} WHERE {}",
                    tname(child),
                    render_local_pred(&pred, opts)
                )
            }
            Operator::Join { left, right, pred } => {
                render_stacked_join(plan, left, right, Some(&pred), &tname, opts)
            }
            Operator::Cross { left, right } => {
                render_stacked_join(plan, left, right, None, &tname, opts)
            }
            Operator::Distinct { child } => format!("SELECT DISTINCT * FROM {}", tname(child)),
            Operator::Attach { child, col, value } => {
                format!("SELECT *, {} AS {col} FROM {}", render_value(&value, opts), tname(child))
            }
            Operator::RowId { child, col } => {
                let order: Vec<&str> = ["iter", "pos"]
                    .into_iter()
                    .filter(|c| plan.cols(child).iter().any(|x| x == c))
                    .collect();
                let over = if order.is_empty() {
                    String::new()
                } else {
                    format!("ORDER BY {}", order.join(", "))
                };
                format!("SELECT *, ROW_NUMBER() OVER ({over}) AS {col} FROM {}", tname(child))
            }
            Operator::Rank { child, col, order_by } => {
                let over = if order_by.is_empty() {
                    String::new()
                } else {
                    format!("ORDER BY {}", order_by.join(", "))
                };
                format!("SELECT *, RANK() OVER ({over}) AS {col} FROM {}", tname(child))
            }
        };
        ctes.push(format!("{} AS (\n  {}\n)", tname(n), body));
    }
    if final_select.is_empty() {
        final_select = format!("SELECT * FROM {}", tname(plan.root));
    }
    format!("WITH {}\n{}\n", ctes.join(",\n"), final_select)
}

fn render_stacked_join(
    plan: &Plan,
    left: NodeId,
    right: NodeId,
    pred: Option<&Predicate>,
    tname: &dyn Fn(NodeId) -> String,
    opts: &SqlOptions,
) -> String {
    let lcols = plan.cols(left).to_vec();
    let rcols = plan.cols(right).to_vec();
    let mut fields: Vec<String> = lcols.iter().map(|c| format!("a.{c}")).collect();
    let mut agree: Vec<String> = Vec::new();
    for c in &rcols {
        if lcols.contains(c) {
            agree.push(format!("a.{c} = b.{c}"));
        } else {
            fields.push(format!("b.{c}"));
        }
    }
    let mut conds = agree;
    if let Some(p) = pred {
        // Qualify each predicate column with the operand that provides it;
        // shared columns agree anyway, so the left copy serves.
        let qualify = |c: &Col| -> Col {
            if lcols.contains(c) {
                format!("a.{c}")
            } else {
                format!("b.{c}")
            }
        };
        conds.push(render_local_pred(&p.map_cols(&qualify), opts));
    }
    let where_clause =
        if conds.is_empty() { String::new() } else { format!(" WHERE {}", conds.join(" AND ")) };
    format!(
        "SELECT {} FROM {} AS a, {} AS b{}",
        fields.join(", "),
        tname(left),
        tname(right),
        where_clause
    )
}

fn render_local_pred(pred: &Predicate, opts: &SqlOptions) -> String {
    let term = |t: &Term| -> String {
        match t {
            Term::Col(c) => c.clone(),
            Term::ColPlusCol(a, b) => format!("{a} + {b}"),
            Term::ColPlusConst(a, n) => format!("{a} + {n}"),
            Term::Const(v) => render_value(v, opts),
        }
    };
    pred.atoms
        .iter()
        .map(|a| {
            format!(
                "{} {} {}",
                term(&a.lhs),
                if a.op == CmpOp::Eq { "=" } else { a.op.symbol() },
                term(&a.rhs)
            )
        })
        .collect::<Vec<_>>()
        .join(" AND ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::corpus;
    use crate::frontend::{normalize, parse};
    use crate::isolator::isolate;

    fn isolated(q: &str) -> Plan {
        let plan = compile(&normalize(&parse(q).unwrap())).unwrap().plan;
        isolate(&plan).0
    }

    #[test]
    fn q1_normal_form_has_a_ser_distinct_projection_tail() {
        let plan = isolated(corpus::Q1);
        let nf = to_normal_form(&plan).unwrap();
        assert!(nf.distinct);
        let kinds: Vec<&str> = nf.tail.iter().map(|n| plan.op(*n).kind_name()).collect();
        assert_eq!(kinds[0], "ser");
        assert!(kinds.contains(&"distinct"));
        assert!(!kinds.contains(&"rank"));
    }

    #[test]
    fn stacked_plans_are_not_in_normal_form() {
        let plan = compile(&normalize(&parse(corpus::Q1).unwrap())).unwrap().plan;
        let err = to_normal_form(&plan).unwrap_err();
        assert!(!err.residuals.is_empty());
    }

    #[test]
    fn q1_single_block_matches_the_expected_text() {
        let plan = isolated(corpus::Q1);
        let block = emit_single_block(&plan, &SqlOptions::default()).unwrap();
        let expected = "\
SELECT DISTINCT d2.*
  FROM doc AS d1, doc AS d2, doc AS d3
 WHERE d1.kind = DOC
   AND d1.name = 'auction.xml'
   AND d2.kind = ELEM
   AND d2.name = 'open_auction'
   AND d2.pre BETWEEN d1.pre + 1 AND d1.pre + d1.size
   AND d3.kind = ELEM
   AND d3.name = 'bidder'
   AND d3.pre BETWEEN d2.pre + 1 AND d2.pre + d2.size
   AND d2.level + 1 = d3.level
 ORDER BY d2.pre
";
        assert_eq!(block.render(), expected);
    }

    #[test]
    fn size_sum_column_replaces_the_inline_arithmetic() {
        let plan = isolated(corpus::Q1);
        let opts = SqlOptions { size_sum_column: Some("post".into()), ..SqlOptions::default() };
        let block = emit_single_block(&plan, &opts).unwrap();
        let text = block.render();
        assert!(text.contains("BETWEEN d1.pre + 1 AND d1.post"), "{text}");
    }

    #[test]
    fn trivial_scan_emits_one_alias_and_no_conjunct_noise() {
        let plan = isolated(r#"doc("auction.xml")"#);
        let block = emit_single_block(&plan, &SqlOptions::default()).unwrap();
        assert_eq!(block.relations.len(), 1);
        assert_eq!(block.select, vec!["d1.*".to_string()]);
        assert!(block.where_conjuncts.iter().all(|c| c.starts_with("d1.")));
    }

    #[test]
    fn stacked_emission_contains_one_rank_window_per_rank_operator() {
        let plan = compile(&normalize(&parse(corpus::Q1).unwrap())).unwrap().plan;
        let ranks = plan
            .nodes()
            .iter()
            .filter(|n| matches!(plan.op(**n), Operator::Rank { .. }))
            .count();
        let sql = emit_stacked(&plan, &SqlOptions::default());
        assert_eq!(sql.matches("RANK() OVER").count(), ranks);
        assert!(sql.contains("WITH t1 AS"));
    }
}
