//! Reference interpreter for table-algebra plans.
//!
//! Evaluation is bottom-up with memoization of shared nodes; intermediate
//! tables are materialized eagerly. This is an oracle, not an engine.

pub mod generate;
pub mod oracle;

use std::collections::HashMap;
use std::rc::Rc;

use thiserror::Error;

use crate::algebra::{Col, NodeId, Operator, Plan, Predicate, Term, Value};
use crate::infoset::{DocRow, DocTable};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub cols: Vec<Col>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(cols: Vec<Col>) -> Table {
        Table { cols, rows: Vec::new() }
    }

    pub fn col_idx(&self, col: &str) -> Option<usize> {
        self.cols.iter().position(|c| c == col)
    }

    /// Rows projected to the given columns, keeping row order.
    pub fn project(&self, cols: &[Col]) -> Table {
        let idx: Vec<usize> = cols.iter().map(|c| self.col_idx(c).expect("column exists")).collect();
        Table {
            cols: cols.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    /// Order-preserving duplicate elimination.
    pub fn distinct(&self) -> Table {
        let mut seen = std::collections::HashSet::new();
        let rows = self.rows.iter().filter(|r| seen.insert((*r).clone())).cloned().collect();
        Table { cols: self.cols.clone(), rows }
    }

    pub fn sorted_by(&self, cols: &[Col]) -> Table {
        let idx: Vec<usize> = cols.iter().map(|c| self.col_idx(c).expect("column exists")).collect();
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            for &i in &idx {
                match a[i].cmp(&b[i]) {
                    std::cmp::Ordering::Equal => continue,
                    other => return other,
                }
            }
            std::cmp::Ordering::Equal
        });
        Table { cols: self.cols.clone(), rows }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("column {0} missing during evaluation")]
    MissingColumn(String),
    #[error("evaluation error: {0}")]
    Other(String),
}

impl DocTable {
    /// The document table as a plain table with the fixed schema.
    pub fn to_table(&self) -> Table {
        fn cell_opt_str(v: &Option<String>) -> Value {
            v.as_ref().map(|s| Value::Str(s.clone())).unwrap_or(Value::Null)
        }
        let mut t = Table::new(crate::algebra::DOC_COLS.iter().map(|c| c.to_string()).collect());
        for r in &self.rows {
            t.rows.push(doc_row_values(r, &cell_opt_str));
        }
        t
    }
}

fn doc_row_values(r: &DocRow, opt: &dyn Fn(&Option<String>) -> Value) -> Vec<Value> {
    vec![
        Value::Int(r.pre as i64),
        Value::Int(r.size as i64),
        Value::Int(r.level as i64),
        Value::Kind(r.kind),
        opt(&r.name),
        opt(&r.value),
        r.data.map(Value::Dec).unwrap_or(Value::Null),
        Value::Int(r.frag as i64),
    ]
}

struct Evaluator<'a> {
    plan: &'a Plan,
    doc: Table,
    memo: HashMap<NodeId, Rc<Table>>,
    /// When set, every node's input is first projected to the inferred
    /// icols; used by the property soundness checks.
    icols_restriction: Option<&'a HashMap<NodeId, std::collections::BTreeSet<Col>>>,
    /// When set, a duplicate elimination step is applied to the output of
    /// every node in the given group.
    distinct_injection: Option<&'a std::collections::HashSet<NodeId>>,
}

/// Evaluates the plan root (usually `ser`).
pub fn eval_plan(plan: &Plan, doc: &DocTable) -> Result<Table, EvalError> {
    eval_node(plan, plan.root, doc)
}

/// Evaluates an arbitrary node of the plan.
pub fn eval_node(plan: &Plan, node: NodeId, doc: &DocTable) -> Result<Table, EvalError> {
    let mut ev = Evaluator {
        plan,
        doc: doc.to_table(),
        memo: HashMap::new(),
        icols_restriction: None,
        distinct_injection: None,
    };
    Ok((*ev.eval(node)?).clone())
}

/// Evaluates the root with every node's output narrowed to its inferred
/// icols on the way into its consumers.
pub fn eval_plan_icols_restricted(
    plan: &Plan,
    doc: &DocTable,
    icols: &HashMap<NodeId, std::collections::BTreeSet<Col>>,
) -> Result<Table, EvalError> {
    let mut ev = Evaluator {
        plan,
        doc: doc.to_table(),
        memo: HashMap::new(),
        icols_restriction: Some(icols),
        distinct_injection: None,
    };
    Ok((*ev.eval(plan.root)?).clone())
}

/// Evaluates the root with an extra duplicate elimination applied to the
/// output of every node in `nodes`.
pub fn eval_plan_with_distinct_at(
    plan: &Plan,
    doc: &DocTable,
    nodes: &std::collections::HashSet<NodeId>,
) -> Result<Table, EvalError> {
    let mut ev = Evaluator {
        plan,
        doc: doc.to_table(),
        memo: HashMap::new(),
        icols_restriction: None,
        distinct_injection: Some(nodes),
    };
    Ok((*ev.eval(plan.root)?).clone())
}

/// The ordered item sequence a `ser`-rooted table denotes.
pub fn items_of(t: &Table) -> Vec<i64> {
    let item = t.col_idx("item").expect("ser output has an item column");
    t.rows.iter().map(|r| r[item].as_int().expect("item is a pre rank")).collect()
}

impl<'a> Evaluator<'a> {
    fn eval(&mut self, node: NodeId) -> Result<Rc<Table>, EvalError> {
        if let Some(t) = self.memo.get(&node) {
            return Ok(t.clone());
        }
        let mut t = self.eval_uncached(node)?;
        if let Some(inject) = self.distinct_injection {
            if inject.contains(&node) {
                t = t.distinct();
            }
        }
        let rc = Rc::new(t);
        self.memo.insert(node, rc.clone());
        Ok(rc)
    }

    fn input(&mut self, consumer: NodeId, child: NodeId) -> Result<Table, EvalError> {
        let _ = consumer;
        let t = self.eval(child)?;
        if let Some(icols) = self.icols_restriction {
            if let Some(cols) = icols.get(&child) {
                let keep: Vec<Col> =
                    self.plan.cols(child).iter().filter(|c| cols.contains(*c)).cloned().collect();
                if keep.is_empty() {
                    // Zero demand: keep the row count, drop all columns.
                    return Ok(Table { cols: Vec::new(), rows: t.rows.iter().map(|_| Vec::new()).collect() });
                }
                return Ok(t.project(&keep));
            }
        }
        Ok((*t).clone())
    }

    fn eval_uncached(&mut self, node: NodeId) -> Result<Table, EvalError> {
        let op = self.plan.op(node).clone();
        match op {
            Operator::DocRef => Ok(self.doc.clone()),
            Operator::LitTable { cols, rows } => Ok(Table { cols, rows }),
            Operator::Ser { child } => {
                let t = self.input(node, child)?;
                let ordered = t.sorted_by(&["pos".into(), "item".into()]);
                Ok(ordered.project(&["pos".into(), "item".into()]))
            }
            Operator::Project { child, mappings } => {
                let t = self.input(node, child)?;
                let idx: Vec<usize> = mappings
                    .iter()
                    .map(|(_, s)| t.col_idx(s).ok_or_else(|| EvalError::MissingColumn(s.clone())))
                    .collect::<Result<_, _>>()?;
                Ok(Table {
                    cols: mappings.iter().map(|(t, _)| t.clone()).collect(),
                    rows: t.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
                })
            }
            Operator::Select { child, pred } => {
                let t = self.input(node, child)?;
                let rows = t
                    .rows
                    .iter()
                    .filter(|r| pred_holds(&pred, &t.cols, r))
                    .cloned()
                    .collect();
                Ok(Table { cols: t.cols.clone(), rows })
            }
            Operator::Join { left, right, pred } => {
                let l = self.input(node, left)?;
                let r = self.input(node, right)?;
                Ok(self.join(&l, &r, Some(&pred)))
            }
            Operator::Cross { left, right } => {
                let l = self.input(node, left)?;
                let r = self.input(node, right)?;
                Ok(self.join(&l, &r, None))
            }
            Operator::Distinct { child } => Ok(self.input(node, child)?.distinct()),
            Operator::Attach { child, col, value } => {
                let mut t = self.input(node, child)?;
                t.cols.push(col);
                for row in &mut t.rows {
                    row.push(value.clone());
                }
                Ok(t)
            }
            Operator::RowId { child, col } => {
                let t = self.input(node, child)?;
                let mut order: Vec<usize> = (0..t.rows.len()).collect();
                // Deterministic ids: (iter, pos) lexicographic when present.
                let keys: Vec<usize> = ["iter", "pos"]
                    .iter()
                    .filter_map(|c| t.col_idx(c))
                    .collect();
                if !keys.is_empty() {
                    order.sort_by(|&a, &b| {
                        for &k in &keys {
                            match t.rows[a][k].cmp(&t.rows[b][k]) {
                                std::cmp::Ordering::Equal => continue,
                                o => return o,
                            }
                        }
                        a.cmp(&b)
                    });
                }
                let mut ids = vec![0i64; t.rows.len()];
                for (rank, &row) in order.iter().enumerate() {
                    ids[row] = rank as i64 + 1;
                }
                let mut cols = t.cols.clone();
                cols.push(col);
                let rows = t
                    .rows
                    .iter()
                    .zip(ids)
                    .map(|(r, id)| {
                        let mut r = r.clone();
                        r.push(Value::Int(id));
                        r
                    })
                    .collect();
                Ok(Table { cols, rows })
            }
            Operator::Rank { child, col, order_by } => {
                let t = self.input(node, child)?;
                let keys: Vec<usize> = order_by
                    .iter()
                    .map(|c| t.col_idx(c).ok_or_else(|| EvalError::MissingColumn(c.clone())))
                    .collect::<Result<_, _>>()?;
                let mut order: Vec<usize> = (0..t.rows.len()).collect();
                order.sort_by(|&a, &b| {
                    for &k in &keys {
                        match t.rows[a][k].cmp(&t.rows[b][k]) {
                            std::cmp::Ordering::Equal => continue,
                            o => return o,
                        }
                    }
                    a.cmp(&b) // stable
                });
                // RANK(): ties share a rank, the next distinct key skips.
                let mut ranks = vec![0i64; t.rows.len()];
                let mut current = 1i64;
                for (i, &row) in order.iter().enumerate() {
                    if i > 0 {
                        let prev = order[i - 1];
                        let tied = keys.iter().all(|&k| t.rows[row][k] == t.rows[prev][k]);
                        if !tied {
                            current = i as i64 + 1;
                        }
                    }
                    ranks[row] = current;
                }
                let mut cols = t.cols.clone();
                cols.push(col);
                let rows = t
                    .rows
                    .iter()
                    .zip(ranks)
                    .map(|(r, rank)| {
                        let mut r = r.clone();
                        r.push(Value::Int(rank));
                        r
                    })
                    .collect();
                Ok(Table { cols, rows })
            }
        }
    }

    /// Join (or cross when `pred` is `None`). Operand schemas may overlap;
    /// shared columns must agree for a pair to qualify and are emitted once.
    fn join(&self, l: &Table, r: &Table, pred: Option<&Predicate>) -> Table {
        let mut cols = l.cols.clone();
        let r_new: Vec<usize> = (0..r.cols.len()).filter(|&i| !l.cols.contains(&r.cols[i])).collect();
        let shared: Vec<(usize, usize)> = (0..r.cols.len())
            .filter_map(|i| l.col_idx(&r.cols[i]).map(|li| (li, i)))
            .collect();
        for &i in &r_new {
            cols.push(r.cols[i].clone());
        }
        let out_cols = cols.clone();
        let mut out = Table::new(out_cols);

        // Hash path for a single two-sided column equality.
        let hash_key = pred.and_then(|p| p.as_col_equality()).and_then(|(a, b)| {
            let (la, rb) = (l.col_idx(a), r.col_idx(b));
            match (la, rb, r.col_idx(a), l.col_idx(b)) {
                (Some(la), Some(rb), None, None) => Some((la, rb)),
                _ => {
                    let (lb, ra) = (l.col_idx(b), r.col_idx(a));
                    match (lb, ra, l.col_idx(a), r.col_idx(b)) {
                        (Some(lb), Some(ra), None, None) => Some((lb, ra)),
                        _ => None,
                    }
                }
            }
        });

        let emit = |out: &mut Table, lrow: &[Value], rrow: &[Value]| {
            for (li, ri) in &shared {
                if lrow[*li] != rrow[*ri] {
                    return;
                }
            }
            if let Some(p) = pred {
                let mut merged: Vec<Value> = lrow.to_vec();
                for &i in &r_new {
                    merged.push(rrow[i].clone());
                }
                if !pred_holds(p, &out.cols, &merged) {
                    return;
                }
                out.rows.push(merged);
            } else {
                let mut merged: Vec<Value> = lrow.to_vec();
                for &i in &r_new {
                    merged.push(rrow[i].clone());
                }
                out.rows.push(merged);
            }
        };

        if let Some((li, ri)) = hash_key {
            let mut map: HashMap<&Value, Vec<usize>> = HashMap::new();
            for (j, rrow) in r.rows.iter().enumerate() {
                map.entry(&rrow[ri]).or_default().push(j);
            }
            for lrow in &l.rows {
                if let Some(matches) = map.get(&lrow[li]) {
                    for &j in matches {
                        emit(&mut out, lrow, &r.rows[j]);
                    }
                }
            }
        } else {
            for lrow in &l.rows {
                for rrow in &r.rows {
                    emit(&mut out, lrow, rrow);
                }
            }
        }
        out
    }
}

fn term_value(term: &Term, cols: &[Col], row: &[Value]) -> Value {
    let get = |c: &Col| -> Value {
        cols.iter().position(|x| x == c).map(|i| row[i].clone()).unwrap_or(Value::Null)
    };
    match term {
        Term::Col(c) => get(c),
        Term::ColPlusCol(a, b) => match (get(a), get(b)) {
            (Value::Int(x), Value::Int(y)) => Value::Int(x + y),
            (Value::Dec(x), Value::Int(y)) => Value::Dec(x + y as f64),
            (Value::Int(x), Value::Dec(y)) => Value::Dec(x as f64 + y),
            (Value::Dec(x), Value::Dec(y)) => Value::Dec(x + y),
            _ => Value::Null,
        },
        Term::ColPlusConst(a, n) => match get(a) {
            Value::Int(x) => Value::Int(x + n),
            Value::Dec(x) => Value::Dec(x + *n as f64),
            _ => Value::Null,
        },
        Term::Const(v) => v.clone(),
    }
}

pub fn pred_holds(pred: &Predicate, cols: &[Col], row: &[Value]) -> bool {
    pred.atoms.iter().all(|a| {
        let l = term_value(&a.lhs, cols, row);
        let r = term_value(&a.rhs, cols, row);
        l.cmp_sql(&r).map(|o| a.op.holds(o)).unwrap_or(false)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Atom, PlanStore};

    #[test]
    fn distinct_preserves_first_occurrence_order() {
        let t = Table {
            cols: vec!["a".into()],
            rows: vec![vec![Value::Int(1)], vec![Value::Int(1)], vec![Value::Int(2)]],
        };
        assert_eq!(t.distinct().rows, vec![vec![Value::Int(1)], vec![Value::Int(2)]]);
    }

    #[test]
    fn lit_table_evaluates_to_its_rows() {
        let mut s = PlanStore::new();
        let lit = s.add(Operator::LitTable {
            cols: vec!["iter".into()],
            rows: vec![vec![Value::Int(1)]],
        });
        let plan = Plan { store: s, root: lit };
        let doc = crate::corpus::auction_doc();
        let t = eval_node(&plan, lit, &doc).unwrap();
        assert_eq!(t.rows, vec![vec![Value::Int(1)]]);
    }

    #[test]
    fn rank_assigns_shared_ranks_to_ties() {
        let mut s = PlanStore::new();
        let lit = s.add(Operator::LitTable {
            cols: vec!["a".into()],
            rows: vec![vec![Value::Int(30)], vec![Value::Int(10)], vec![Value::Int(30)], vec![Value::Int(20)]],
        });
        let rank = s.add(Operator::Rank { child: lit, col: "r".into(), order_by: vec!["a".into()] });
        let plan = Plan { store: s, root: rank };
        let doc = crate::corpus::auction_doc();
        let t = eval_node(&plan, rank, &doc).unwrap();
        let ranks: Vec<i64> = t.rows.iter().map(|r| r[1].as_int().unwrap()).collect();
        assert_eq!(ranks, vec![3, 1, 3, 2]);
    }

    #[test]
    fn join_with_overlapping_operands_requires_agreement() {
        let mut s = PlanStore::new();
        let l = s.add(Operator::LitTable {
            cols: vec!["k".into(), "x".into()],
            rows: vec![
                vec![Value::Int(1), Value::Int(10)],
                vec![Value::Int(2), Value::Int(20)],
            ],
        });
        let r = s.add(Operator::LitTable {
            cols: vec!["j".into(), "x".into()],
            rows: vec![
                vec![Value::Int(1), Value::Int(10)],
                vec![Value::Int(2), Value::Int(99)],
            ],
        });
        let join = s.add(Operator::Join { left: l, right: r, pred: Predicate::new(vec![Atom::col_eq_col("k", "j")]) });
        let plan = Plan { store: s, root: join };
        let doc = crate::corpus::auction_doc();
        let t = eval_node(&plan, join, &doc).unwrap();
        // Only the k=1 pair agrees on the shared x column.
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0], vec![Value::Int(1), Value::Int(10), Value::Int(1)]);
    }
}
