//! Join graph isolation: goal-directed rewriting of stacked plans into
//! *join graph + plan tail* normal form.
//!
//! The seventeen rules fall into three groups. House cleaning (1-5, 7, 13)
//! simplifies or removes operators whose output is not demanded. The rank
//! goal (12, 14-17) trades single-column rankings for projections and moves
//! the remaining rankings into the plan tail, where rule 17 splices adjacent
//! ranking criteria and rule 2 drops all but the topmost instance. The
//! distinct-and-join goal (8, 6, 10, 11, 9, 1) introduces one duplicate
//! elimination in the tail, deletes the ones it covers, pushes equi-joins
//! down into the plan, and collapses joins that have degenerated into
//! key self-joins over a shared node.
//!
//! Every rewrite builds replacement nodes and re-hangs the ancestors; a
//! candidate that fails schema validation is treated as a premise failure,
//! so the plan validates after every recorded step.

use crate::algebra::{Atom, NodeId, Operator, Plan, Predicate};
use crate::infoset::DocTable;
use crate::properties::{infer, PropertyStore};

/// One applied rewrite, with the root before and after (ids into the plan's
/// shared node store).
#[derive(Debug, Clone)]
pub struct RewriteStep {
    pub rule: u8,
    pub node: NodeId,
    pub before: NodeId,
    pub after: NodeId,
}

#[derive(Debug, Clone, Default)]
pub struct IsolationReport {
    pub steps: Vec<RewriteStep>,
    pub normal_form: bool,
    pub residuals: Vec<String>,
    pub step_budget: usize,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("rule {rule} does not apply at {node}: {reason}")]
pub struct PremiseFailure {
    pub rule: u8,
    pub node: NodeId,
    pub reason: String,
}

const HOUSECLEANING: &[u8] = &[1, 2, 3, 4, 5, 7, 13];
const RANK_GOAL: &[u8] = &[14, 15, 16, 17, 12, 2];
const DISTINCT_JOIN_GOAL: &[u8] = &[8, 6, 10, 9, 11, 1];

#[derive(Default)]
pub struct IsolateOptions<'a> {
    /// Replay every recorded step against these documents and require the
    /// serialized item sequence to be unchanged.
    pub check_docs: Vec<&'a DocTable>,
}

/// Applies a single rule at a node, with freshly inferred properties.
pub fn apply_rule(plan: &Plan, node: NodeId, rule: u8) -> Result<Plan, PremiseFailure> {
    let mut rw = Rewriter {
        plan: plan.clone(),
        props: infer(plan),
        steps: Vec::new(),
        check_docs: Vec::new(),
        seen_roots: std::collections::HashSet::new(),
    };
    let replacement = rw.build(node, rule)?;
    let new_root = rw.commit_candidate(node, rule, replacement)?;
    rw.plan.root = new_root;
    Ok(rw.plan)
}

/// Rewrites a compiled plan into join-graph normal form. If the normal form
/// is not reached, `normal_form` is false and the blocking operators are
/// listed; the plan itself is always valid and equivalent.
pub fn isolate(plan: &Plan) -> (Plan, IsolationReport) {
    isolate_with(plan, &IsolateOptions::default())
}

pub fn isolate_with(plan: &Plan, opts: &IsolateOptions) -> (Plan, IsolationReport) {
    let budget = 10 * plan.operator_count();
    let mut rw = Rewriter {
        plan: plan.clone(),
        props: infer(plan),
        steps: Vec::new(),
        check_docs: opts.check_docs.clone(),
        seen_roots: [plan.root].into_iter().collect(),
    };
    loop {
        let before = rw.steps.len();
        rw.run_phase(HOUSECLEANING, budget);
        rw.run_phase(RANK_GOAL, budget);
        rw.run_phase(HOUSECLEANING, budget);
        rw.run_phase(DISTINCT_JOIN_GOAL, budget);
        rw.run_phase(HOUSECLEANING, budget);
        if rw.steps.len() == before || rw.steps.len() >= budget {
            break;
        }
    }
    let mut residuals = crate::sqlgen::normal_form_residuals(&rw.plan);
    if rw.steps.len() >= budget {
        residuals.push(format!("step budget of {budget} exhausted"));
    }
    let report = IsolationReport {
        normal_form: residuals.is_empty(),
        residuals,
        step_budget: budget,
        steps: rw.steps,
    };
    (rw.plan, report)
}

/// Renders the step log as structured text (the `--trace` output).
pub fn trace_text(plan: &Plan, report: &IsolationReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for s in &report.steps {
        let _ = writeln!(
            out,
            "rule {:2} at {} [{}]  root {} -> {}",
            s.rule,
            s.node,
            plan.op(s.node).kind_name(),
            s.before,
            s.after
        );
    }
    let _ = writeln!(
        out,
        "{} steps (budget {}), normal form: {}{}",
        report.steps.len(),
        report.step_budget,
        report.normal_form,
        if report.residuals.is_empty() {
            String::new()
        } else {
            format!(", residuals: {}", report.residuals.join("; "))
        }
    );
    out
}

struct Rewriter<'a> {
    plan: Plan,
    props: PropertyStore,
    steps: Vec<RewriteStep>,
    check_docs: Vec<&'a DocTable>,
    /// Roots already visited; re-entering one would loop, since the engine
    /// is deterministic. Content addressing makes the root the plan identity.
    seen_roots: std::collections::HashSet<NodeId>,
}

impl<'a> Rewriter<'a> {
    fn run_phase(&mut self, rules: &[u8], budget: usize) {
        loop {
            if self.steps.len() >= budget {
                return;
            }
            let depths = self.plan.depths();
            let mut inner_first = self.plan.nodes();
            // Innermost (leaf-most) first, node id as the tie break.
            inner_first
                .sort_by_key(|n| (std::cmp::Reverse(depths.get(n).copied().unwrap_or(0)), *n));
            let mut applied = false;
            'scan: for &rule in rules {
                // The new duplicate elimination of rule 8 belongs at the top
                // of the plan fragment it covers; everything else works from
                // the leaves up.
                let outer_first;
                let nodes: &[NodeId] = if rule == 8 {
                    outer_first = {
                        let mut v = inner_first.clone();
                        v.sort_by_key(|n| (depths.get(n).copied().unwrap_or(0), *n));
                        v
                    };
                    &outer_first
                } else {
                    &inner_first
                };
                for &node in nodes {
                    if self.attempt(node, rule) {
                        applied = true;
                        break 'scan;
                    }
                }
            }
            if !applied {
                return;
            }
        }
    }

    fn attempt(&mut self, node: NodeId, rule: u8) -> bool {
        let Ok(replacement) = self.build(node, rule) else {
            return false;
        };
        let old_root = self.plan.root;
        let Ok(new_root) = self.commit_candidate(node, rule, replacement) else {
            return false;
        };
        if !self.seen_roots.insert(new_root) {
            return false;
        }
        if !self.check_docs.is_empty() && !self.preserves_semantics(new_root) {
            return false;
        }
        self.steps.push(RewriteStep { rule, node, before: old_root, after: new_root });
        self.plan.root = new_root;
        self.props = infer(&self.plan);
        true
    }

    /// Substitutes the replacement, validates, and runs the rule 8 trigger.
    /// Returns the new root without committing it.
    fn commit_candidate(
        &mut self,
        node: NodeId,
        rule: u8,
        replacement: NodeId,
    ) -> Result<NodeId, PremiseFailure> {
        let fail = |reason: &str| PremiseFailure { rule, node, reason: reason.into() };
        if replacement == node {
            return Err(fail("rewrite is a no-op"));
        }
        let root = self.plan.root;
        let new_root = self.plan.store.substitute(root, node, replacement);
        if new_root == root {
            return Err(fail("node is not part of the plan"));
        }
        let errs = self.plan.store.validate_rooted(new_root, true);
        if !errs.is_empty() {
            return Err(fail(&format!("result does not validate: {}", errs.join("; "))));
        }
        if rule == 8 {
            // Apply only when a duplicate elimination strictly downstream
            // becomes covered (its set property flips to true).
            let old_set = &self.props;
            let candidate = Plan { store: self.plan.store.clone(), root: new_root };
            let new_props = infer(&candidate);
            let covered = candidate.nodes().into_iter().any(|d| {
                d != node
                    && matches!(candidate.op(d), Operator::Distinct { .. })
                    && self.plan.reachable(d, node)
                    && !old_set.set(d)
                    && new_props.set(d)
            });
            if !covered {
                return Err(fail("no downstream duplicate elimination becomes covered"));
            }
        }
        Ok(new_root)
    }

    fn preserves_semantics(&mut self, new_root: NodeId) -> bool {
        use crate::evaluator::{eval_plan, items_of};
        let old_root = self.plan.root;
        for doc in &self.check_docs {
            let before = eval_plan(&self.plan, doc).map(|t| items_of(&t));
            let mut after_plan = Plan { store: self.plan.store.clone(), root: new_root };
            after_plan.root = new_root;
            let after = eval_plan(&after_plan, doc).map(|t| items_of(&t));
            match (before, after) {
                (Ok(b), Ok(a)) if b == a => continue,
                _ => {
                    let _ = old_root;
                    return false;
                }
            }
        }
        true
    }

    fn add(&mut self, op: Operator) -> NodeId {
        self.plan.store.add(op)
    }

    fn identity_project(&mut self, child: NodeId, keep: &[String]) -> NodeId {
        let mappings = keep.iter().map(|c| (c.clone(), c.clone())).collect();
        self.add(Operator::Project { child, mappings })
    }

    /// Builds the rule's right-hand side for the node, or reports which
    /// premise clause failed. Rules 11 and 15 pick the first eligible
    /// operand side deterministically.
    fn build(&mut self, node: NodeId, rule: u8) -> Result<NodeId, PremiseFailure> {
        let fail = |reason: String| Err(PremiseFailure { rule, node, reason });
        let op = self.plan.op(node).clone();
        match rule {
            1 => match op {
                Operator::RowId { child, col } if !self.props.icols(node).contains(&col) => {
                    Ok(child)
                }
                Operator::RowId { .. } => fail("row id column is demanded".into()),
                _ => fail("not a row id".into()),
            },
            2 => match op {
                Operator::Rank { child, ref col, .. } if !self.props.icols(node).contains(col) => {
                    Ok(child)
                }
                Operator::Rank { .. } => fail("rank column is demanded".into()),
                _ => fail("not a rank".into()),
            },
            3 => match op {
                Operator::Attach { child, ref col, .. }
                    if !self.props.icols(node).contains(col) =>
                {
                    Ok(child)
                }
                Operator::Attach { .. } => fail("attached column is demanded".into()),
                _ => fail("not an attach".into()),
            },
            4 => match op {
                Operator::Project { child, ref mappings } => {
                    let icols = self.props.icols(node);
                    let keep: Vec<_> =
                        mappings.iter().filter(|(t, _)| icols.contains(t)).cloned().collect();
                    if keep.is_empty() {
                        return fail("no projection target is demanded".into());
                    }
                    if keep.len() == mappings.len() {
                        return fail("all projection targets are demanded".into());
                    }
                    Ok(self.add(Operator::Project { child, mappings: keep }))
                }
                _ => fail("not a projection".into()),
            },
            5 => match op {
                Operator::Cross { left, right } => {
                    let lit_side = |s: &Rewriter, n: NodeId| match s.plan.op(n) {
                        Operator::LitTable { cols, rows } if rows.len() == 1 => {
                            Some((cols.clone(), rows[0].clone()))
                        }
                        _ => None,
                    };
                    let (base, cols, row) = if let Some((c, r)) = lit_side(self, right) {
                        (left, c, r)
                    } else if let Some((c, r)) = lit_side(self, left) {
                        (right, c, r)
                    } else {
                        return fail("no single-row literal operand".into());
                    };
                    let mut out = base;
                    for (col, value) in cols.into_iter().zip(row) {
                        out = self.add(Operator::Attach { child: out, col, value });
                    }
                    Ok(out)
                }
                _ => fail("not a cross product".into()),
            },
            6 => match op {
                Operator::Distinct { child } if self.props.set(node) => Ok(child),
                Operator::Distinct { .. } => fail("no duplicate elimination upstream".into()),
                _ => fail("not a distinct".into()),
            },
            7 => match op {
                Operator::Distinct { child } => {
                    let icols = self.props.icols(node);
                    let consts = self.props.consts(node);
                    let keep: Vec<String> = self
                        .plan
                        .cols(child)
                        .iter()
                        .filter(|c| icols.contains(*c) || !consts.contains_key(*c))
                        .cloned()
                        .collect();
                    if keep.len() == self.plan.cols(child).len() {
                        return fail("no undemanded constant columns".into());
                    }
                    if keep.is_empty() {
                        return fail("would project to zero columns".into());
                    }
                    let proj = self.identity_project(child, &keep);
                    Ok(self.add(Operator::Distinct { child: proj }))
                }
                _ => fail("not a distinct".into()),
            },
            8 => {
                if matches!(op, Operator::Distinct { .. }) {
                    return fail("target is a distinct".into());
                }
                if self.props.set(node) {
                    return fail("output already undergoes duplicate elimination".into());
                }
                let icols = self.props.icols(node);
                if icols.is_empty() {
                    return fail("no demand".into());
                }
                let keys = self.props.keys(node);
                if !keys.iter().any(|k| k.iter().all(|c| icols.contains(c))) {
                    return fail("no key within the demanded columns".into());
                }
                let keep: Vec<String> = icols.into_iter().collect();
                let proj = self.identity_project(node, &keep);
                Ok(self.add(Operator::Distinct { child: proj }))
            }
            9 => match op {
                Operator::Join { left, right, ref pred } => {
                    let Some((a, b)) = pred.as_col_equality() else {
                        return fail("predicate is not a single column equality".into());
                    };
                    if a != b {
                        return fail("equality does not relate a column to itself".into());
                    }
                    if left != right {
                        return fail("operands are not the same shared node".into());
                    }
                    let singleton: crate::properties::ColSet =
                        [a.clone()].into_iter().collect();
                    if !self.props.keys(left).contains(&singleton) {
                        return fail(format!("{{{a}}} is not a key of the operand"));
                    }
                    Ok(left)
                }
                _ => fail("not a join".into()),
            },
            10 => match op {
                Operator::Join { left, right, ref pred } => {
                    let Some((a, b)) = pred.as_col_equality() else {
                        return fail("predicate is not a single column equality".into());
                    };
                    let consts = self.props.consts(node);
                    match (consts.get(a), consts.get(b)) {
                        (Some(va), Some(vb)) if va == vb => {
                            Ok(self.add(Operator::Cross { left, right }))
                        }
                        _ => fail("predicate columns are not bound to one constant".into()),
                    }
                }
                _ => fail("not a join".into()),
            },
            11 => match op {
                Operator::Join { left, right, ref pred } => {
                    if pred.as_col_equality().is_none() {
                        return fail("predicate is not a single column equality".into());
                    }
                    for (operand, other, operand_is_left) in
                        [(left, right, true), (right, left, false)]
                    {
                        match self.pull_through(node, operand, other, operand_is_left, pred) {
                            Ok(n) => return Ok(n),
                            Err(_) => continue,
                        }
                    }
                    fail("no operand's top operator can be pulled above the join".into())
                }
                _ => fail("not a join".into()),
            },
            12 => match op {
                Operator::Rank { child, col, order_by } if order_by.len() == 1 => {
                    let mut mappings = vec![(col, order_by[0].clone())];
                    for c in self.plan.cols(child).to_vec() {
                        mappings.push((c.clone(), c));
                    }
                    Ok(self.add(Operator::Project { child, mappings }))
                }
                Operator::Rank { .. } => fail("not a single-column ranking".into()),
                _ => fail("not a rank".into()),
            },
            13 => match op {
                Operator::Rank { child, col, ref order_by } => {
                    let consts = self.props.consts(node);
                    let trimmed: Vec<String> =
                        order_by.iter().filter(|c| !consts.contains_key(*c)).cloned().collect();
                    if trimmed.len() == order_by.len() {
                        return fail("no constant ranking criteria".into());
                    }
                    Ok(self.add(Operator::Rank { child, col, order_by: trimmed }))
                }
                _ => fail("not a rank".into()),
            },
            14 => {
                let (child, rebuild): (NodeId, Box<dyn Fn(NodeId) -> Operator>) = match &op {
                    Operator::Select { child, pred } => {
                        let pred = pred.clone();
                        (*child, Box::new(move |c| Operator::Select { child: c, pred: pred.clone() }))
                    }
                    Operator::Distinct { child } => {
                        (*child, Box::new(|c| Operator::Distinct { child: c }))
                    }
                    Operator::Attach { child, col, value } => {
                        let (col, value) = (col.clone(), value.clone());
                        (*child, Box::new(move |c| Operator::Attach {
                            child: c,
                            col: col.clone(),
                            value: value.clone(),
                        }))
                    }
                    Operator::RowId { child, col } => {
                        let col = col.clone();
                        (*child, Box::new(move |c| Operator::RowId { child: c, col: col.clone() }))
                    }
                    _ => return fail("not a selection, distinct, attach, or row id".into()),
                };
                let Operator::Rank { child: q, col: rank_col, order_by } =
                    self.plan.op(child).clone()
                else {
                    return fail("input is not a rank".into());
                };
                if let Operator::Select { pred, .. } = &op {
                    if pred.cols().contains(&rank_col) {
                        return fail("selection predicate reads the rank column".into());
                    }
                }
                let inner = self.add(rebuild(q));
                Ok(self.add(Operator::Rank { child: inner, col: rank_col, order_by }))
            }
            15 => {
                let (left, right, pred) = match &op {
                    Operator::Join { left, right, pred } => (*left, *right, Some(pred.clone())),
                    Operator::Cross { left, right } => (*left, *right, None),
                    _ => return fail("not a join or cross".into()),
                };
                for (operand, is_left) in [(left, true), (right, false)] {
                    let Operator::Rank { child: q, col, order_by } = self.plan.op(operand).clone()
                    else {
                        continue;
                    };
                    if let Some(p) = &pred {
                        if p.cols().contains(&col) {
                            continue;
                        }
                    }
                    let inner = match (&pred, is_left) {
                        (Some(p), true) => {
                            self.add(Operator::Join { left: q, right, pred: p.clone() })
                        }
                        (Some(p), false) => {
                            self.add(Operator::Join { left, right: q, pred: p.clone() })
                        }
                        (None, true) => self.add(Operator::Cross { left: q, right }),
                        (None, false) => self.add(Operator::Cross { left, right: q }),
                    };
                    return Ok(self.add(Operator::Rank { child: inner, col, order_by }));
                }
                fail("no rank operand".into())
            }
            16 => match op {
                Operator::Project { child, ref mappings } => {
                    let Operator::Rank { child: q, col: rank_col, order_by } =
                        self.plan.op(child).clone()
                    else {
                        return fail("input is not a rank".into());
                    };
                    let rank_requests: Vec<_> =
                        mappings.iter().filter(|(_, s)| *s == rank_col).collect();
                    if rank_requests.len() != 1 {
                        return fail("rank column must be requested exactly once".into());
                    }
                    let new_rank_col = rank_requests[0].0.clone();
                    if order_by.contains(&new_rank_col) {
                        return fail("renamed rank column collides with the criteria".into());
                    }
                    let mut new_mappings: Vec<(String, String)> =
                        order_by.iter().map(|b| (b.clone(), b.clone())).collect();
                    for (t, s) in mappings {
                        if s == &rank_col {
                            continue;
                        }
                        if let Some((_, existing)) = new_mappings.iter().find(|(t2, _)| t2 == t) {
                            if existing != s {
                                return fail(format!("target {t} conflicts with a criterion"));
                            }
                            continue;
                        }
                        new_mappings.push((t.clone(), s.clone()));
                    }
                    let proj = self.add(Operator::Project { child: q, mappings: new_mappings });
                    Ok(self.add(Operator::Rank { child: proj, col: new_rank_col, order_by }))
                }
                _ => fail("not a projection".into()),
            },
            17 => match op {
                Operator::Rank { child, col, ref order_by } => {
                    let Operator::Rank { col: inner_col, order_by: inner_order, .. } =
                        self.plan.op(child).clone()
                    else {
                        return fail("input is not a rank".into());
                    };
                    if !order_by.contains(&inner_col) {
                        return fail("criteria do not reference the inner rank".into());
                    }
                    if inner_order.contains(&col) {
                        return fail("inner criteria reference the outer rank column".into());
                    }
                    let mut spliced: Vec<String> = Vec::new();
                    for b in order_by {
                        if *b == inner_col {
                            for c in &inner_order {
                                if !spliced.contains(c) {
                                    spliced.push(c.clone());
                                }
                            }
                        } else if !spliced.contains(b) {
                            spliced.push(b.clone());
                        }
                    }
                    Ok(self.add(Operator::Rank { child, col, order_by: spliced }))
                }
                _ => fail("not a rank".into()),
            },
            other => fail(format!("unknown rule {other}")),
        }
    }

    /// Rule 11 mechanics: pulls the top operator of one join operand above
    /// the join, translating the predicate through projections and carrying
    /// the other side's columns along. Blocked when the pulled operator is
    /// in the operand sub-DAG of the other side (that rewrite would fold the
    /// plan into itself) and when the result does not validate.
    fn pull_through(
        &mut self,
        join: NodeId,
        operand: NodeId,
        other: NodeId,
        operand_is_left: bool,
        pred: &Predicate,
    ) -> Result<NodeId, PremiseFailure> {
        let fail = |reason: String| Err(PremiseFailure { rule: 11, node: join, reason });
        let pulled = self.plan.op(operand).clone();
        if matches!(
            pulled,
            Operator::Distinct { .. }
                | Operator::RowId { .. }
                | Operator::Rank { .. }
                | Operator::Ser { .. }
                | Operator::DocRef
                | Operator::LitTable { .. }
        ) {
            return fail("operator kind is not pulled".into());
        }
        if self.plan.reachable(operand, other) {
            return fail("pulled operator feeds the other operand".into());
        }
        let (a, b) = pred.as_col_equality().expect("checked by the caller");
        let (a, b) = (a.clone(), b.clone());
        let operand_cols = self.plan.store.col_set(operand);
        let other_cols = self.plan.store.col_set(other);
        // The predicate column living on the pulled side.
        let (ocol, qcol) = if operand_cols.contains(&a) && other_cols.contains(&b) {
            (a, b)
        } else if operand_cols.contains(&b) && other_cols.contains(&a) {
            (b, a)
        } else {
            return fail("predicate does not span the two operands".into());
        };
        let mk_join = |s: &mut Self, inner: NodeId, p: Predicate| {
            if operand_is_left {
                s.add(Operator::Join { left: inner, right: other, pred: p })
            } else {
                s.add(Operator::Join { left: other, right: inner, pred: p })
            }
        };
        match pulled {
            Operator::Select { child, pred: p } => {
                let inner = mk_join(self, child, Predicate::new(vec![Atom::col_eq_col(&ocol, &qcol)]));
                Ok(self.add(Operator::Select { child: inner, pred: p }))
            }
            Operator::Attach { child, col, value } => {
                if col == ocol {
                    return fail("the attach produces the predicate column".into());
                }
                let inner = mk_join(self, child, Predicate::new(vec![Atom::col_eq_col(&ocol, &qcol)]));
                Ok(self.add(Operator::Attach { child: inner, col, value }))
            }
            Operator::Project { child, mappings } => {
                let Some((_, source)) = mappings.iter().find(|(t, _)| *t == ocol) else {
                    return fail("projection does not produce the predicate column".into());
                };
                let source = source.clone();
                let inner =
                    mk_join(self, child, Predicate::new(vec![Atom::col_eq_col(&source, &qcol)]));
                let mut new_mappings = mappings.clone();
                for c in self.plan.cols(other).to_vec() {
                    if let Some((_, s)) = new_mappings.iter().find(|(t, _)| *t == c) {
                        // A rename colliding with a carried column is fine
                        // when the new join predicate equates the two
                        // sources anyway.
                        let equated = (*s == source && c == qcol) || (*s == qcol && c == source);
                        if *s != c && !equated {
                            return fail(format!("carried column {c} collides with a rename"));
                        }
                    } else {
                        new_mappings.push((c.clone(), c));
                    }
                }
                Ok(self.add(Operator::Project { child: inner, mappings: new_mappings }))
            }
            Operator::Join { left: l2, right: r2, pred: p2 } => {
                let host_left = self.plan.store.col_set(l2).contains(&ocol);
                let host = if host_left { l2 } else { r2 };
                if !self.plan.store.col_set(host).contains(&ocol) {
                    return fail("predicate column lost inside the pulled join".into());
                }
                let inner =
                    mk_join(self, host, Predicate::new(vec![Atom::col_eq_col(&ocol, &qcol)]));
                Ok(if host_left {
                    self.add(Operator::Join { left: inner, right: r2, pred: p2 })
                } else {
                    self.add(Operator::Join { left: l2, right: inner, pred: p2 })
                })
            }
            Operator::Cross { left: l2, right: r2 } => {
                let host_left = self.plan.store.col_set(l2).contains(&ocol);
                let host = if host_left { l2 } else { r2 };
                let inner =
                    mk_join(self, host, Predicate::new(vec![Atom::col_eq_col(&ocol, &qcol)]));
                Ok(if host_left {
                    self.add(Operator::Cross { left: inner, right: r2 })
                } else {
                    self.add(Operator::Cross { left: l2, right: inner })
                })
            }
            _ => fail("operator kind is not pulled".into()),
        }
    }
}

/// Shorthand used in tests: a plan built from a few operators.
#[cfg(test)]
fn plan_of(build: impl FnOnce(&mut crate::algebra::PlanStore) -> NodeId) -> Plan {
    let mut store = crate::algebra::PlanStore::new();
    let root = build(&mut store);
    Plan { store, root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{PlanStore, Value};
    use crate::compiler::compile;
    use crate::corpus;
    use crate::evaluator::{eval_plan, items_of};
    use crate::frontend::{normalize, parse};

    fn compile_q(q: &str) -> Plan {
        compile(&normalize(&parse(q).unwrap())).unwrap().plan
    }

    fn count_ops(plan: &Plan, kind: &str) -> usize {
        plan.nodes().iter().filter(|n| plan.op(**n).kind_name() == kind).count()
    }

    #[test]
    fn rule_12_trades_a_single_column_rank_for_a_projection() {
        let plan = plan_of(|s| {
            let doc = s.add(Operator::DocRef);
            let proj = s.add(Operator::Project {
                child: doc,
                mappings: vec![("item".into(), "pre".into())],
            });
            let rank =
                s.add(Operator::Rank { child: proj, col: "pos".into(), order_by: vec!["item".into()] });
            s.add(Operator::Ser { child: rank })
        });
        let rank = plan
            .nodes()
            .into_iter()
            .find(|n| matches!(plan.op(*n), Operator::Rank { .. }))
            .unwrap();
        let rewritten = apply_rule(&plan, rank, 12).unwrap();
        assert_eq!(count_ops(&rewritten, "rank"), 0);
        let doc = corpus::auction_doc();
        assert_eq!(
            items_of(&eval_plan(&plan, &doc).unwrap()),
            items_of(&eval_plan(&rewritten, &doc).unwrap())
        );
    }

    #[test]
    fn rule_5_turns_a_literal_cross_into_an_attach() {
        let plan = plan_of(|s| {
            let doc = s.add(Operator::DocRef);
            let lit = s.add(Operator::LitTable {
                cols: vec!["iter".into()],
                rows: vec![vec![Value::Int(1)]],
            });
            let cross = s.add(Operator::Cross { left: doc, right: lit });
            let proj = s.add(Operator::Project {
                child: cross,
                mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
            });
            s.add(Operator::Ser { child: proj })
        });
        let cross = plan
            .nodes()
            .into_iter()
            .find(|n| matches!(plan.op(*n), Operator::Cross { .. }))
            .unwrap();
        let rewritten = apply_rule(&plan, cross, 5).unwrap();
        assert_eq!(count_ops(&rewritten, "cross"), 0);
        assert_eq!(count_ops(&rewritten, "attach"), 1);
    }

    #[test]
    fn rule_9_collapses_a_key_self_join_over_a_shared_node() {
        let plan = plan_of(|s| {
            let doc = s.add(Operator::DocRef);
            let join = s.add(Operator::Join {
                left: doc,
                right: doc,
                pred: Predicate::new(vec![Atom::col_eq_col("pre", "pre")]),
            });
            let proj = s.add(Operator::Project {
                child: join,
                mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
            });
            s.add(Operator::Ser { child: proj })
        });
        let join = plan
            .nodes()
            .into_iter()
            .find(|n| matches!(plan.op(*n), Operator::Join { .. }))
            .unwrap();
        let rewritten = apply_rule(&plan, join, 9).unwrap();
        assert_eq!(count_ops(&rewritten, "join"), 0);
    }

    #[test]
    fn premise_failures_carry_the_failing_clause() {
        let plan = plan_of(|s| {
            let doc = s.add(Operator::DocRef);
            let proj = s.add(Operator::Project {
                child: doc,
                mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
            });
            s.add(Operator::Ser { child: proj })
        });
        let proj = plan
            .nodes()
            .into_iter()
            .find(|n| matches!(plan.op(*n), Operator::Project { .. }))
            .unwrap();
        let err = apply_rule(&plan, proj, 4).unwrap_err();
        assert!(err.reason.contains("demanded"), "{err}");
    }

    #[test]
    fn isolation_is_idempotent_and_semantics_preserving_on_q1() {
        let plan = compile_q(corpus::Q1);
        let doc = corpus::auction_doc();
        let before = items_of(&eval_plan(&plan, &doc).unwrap());
        let (isolated, report) = isolate(&plan);
        assert!(report.normal_form, "residuals: {:?}", report.residuals);
        assert!(isolated.validate().is_empty());
        let after = items_of(&eval_plan(&isolated, &doc).unwrap());
        assert_eq!(before, after);
        let (again, report2) = isolate(&isolated);
        assert_eq!(report2.steps.len(), 0, "{}", trace_text(&again, &report2));
        assert_eq!(again.dump(), isolated.dump());
    }

    #[test]
    fn q1_isolates_to_the_expected_operator_census() {
        let plan = compile_q(corpus::Q1);
        let (isolated, report) = isolate(&plan);
        assert!(report.normal_form, "residuals: {:?}", report.residuals);
        assert_eq!(count_ops(&isolated, "join"), 2, "{}", isolated.dump());
        assert_eq!(count_ops(&isolated, "distinct"), 1, "{}", isolated.dump());
        assert_eq!(count_ops(&isolated, "rank"), 0, "{}", isolated.dump());
        assert_eq!(count_ops(&isolated, "rowid"), 0, "{}", isolated.dump());
        assert_eq!(count_ops(&isolated, "doc"), 1);
        assert!(report.steps.len() <= report.step_budget);
    }

    #[test]
    fn stepwise_replay_preserves_the_item_sequence() {
        let plan = compile_q(corpus::Q1);
        let doc = corpus::auction_doc();
        let opts = IsolateOptions { check_docs: vec![&doc] };
        let (isolated, report) = isolate_with(&plan, &opts);
        assert!(report.normal_form, "residuals: {:?}", report.residuals);
        // The checked run rejects any step that changes the output, so
        // reaching normal form means every recorded step preserved it.
        let expected = items_of(&eval_plan(&plan, &doc).unwrap());
        assert_eq!(items_of(&eval_plan(&isolated, &doc).unwrap()), expected);
    }

    #[test]
    fn already_normal_plans_take_zero_steps() {
        let plan = plan_of(|s: &mut PlanStore| {
            let doc = s.add(Operator::DocRef);
            let proj = s.add(Operator::Project {
                child: doc,
                mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
            });
            s.add(Operator::Ser { child: proj })
        });
        let (_, report) = isolate(&plan);
        assert!(report.normal_form);
        assert_eq!(report.steps.len(), 0);
    }
}
