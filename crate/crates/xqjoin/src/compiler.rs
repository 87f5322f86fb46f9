//! Loop-lifting compilation of core expressions into table-algebra plans.
//!
//! Every subexpression is treated as evaluated once per iteration of its
//! innermost enclosing `for` loop and compiles to a plan with schema
//! `iter|pos|item`: row `[i, p, v]` says iteration `i` produced the node
//! with pre rank `v` at sequence position `p`. Compilation starts from an
//! empty variable environment and a singleton loop relation, and finishes
//! by placing the serialization point on top.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::algebra::{Atom, CmpOp, NodeId, Operator, Plan, PlanStore, Predicate, Term, Value};
use crate::frontend::{Core, Literal};
use crate::infoset::{axis_predicate, Axis, NodeTest, CTX_FRAG, CTX_LEVEL, CTX_PRE, CTX_SIZE};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("unbound variable ${0}")]
    Unbound(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

/// Variable environment: every entry is a plan with schema `iter|pos|item`.
pub type Env = BTreeMap<String, NodeId>;

/// The compiled plan plus the plan node of each core subexpression, for
/// schema-invariant checks in tests.
pub struct Compiled {
    pub plan: Plan,
    pub subexprs: Vec<(String, NodeId)>,
}

/// Compiles a normalized core expression into a `ser`-rooted plan.
pub fn compile(core: &Core) -> Result<Compiled, CompileError> {
    let mut store = PlanStore::new();
    let loop0 = store.add(Operator::LitTable {
        cols: vec!["iter".into()],
        rows: vec![vec![Value::Int(1)]],
    });
    let mut cc = Compiler { store, subexprs: Vec::new() };
    let q = cc.compile(core, &Env::new(), loop0)?;
    let root = cc.store.add(Operator::Ser { child: q });
    Ok(Compiled { plan: Plan { store: cc.store, root }, subexprs: cc.subexprs })
}

struct Compiler {
    store: PlanStore,
    subexprs: Vec<(String, NodeId)>,
}

impl Compiler {
    fn add(&mut self, op: Operator) -> NodeId {
        self.store.add(op)
    }

    fn project(&mut self, child: NodeId, mappings: &[(&str, &str)]) -> NodeId {
        self.add(Operator::Project {
            child,
            mappings: mappings.iter().map(|(t, s)| (t.to_string(), s.to_string())).collect(),
        })
    }

    fn compile(&mut self, core: &Core, env: &Env, loop_rel: NodeId) -> Result<NodeId, CompileError> {
        let q = match core {
            Core::Doc(uri) => self.rule_doc(uri, loop_rel),
            Core::Var(v) => *env.get(v).ok_or_else(|| CompileError::Unbound(v.clone()))?,
            Core::Ddo(inner) => {
                let q = self.compile(inner, env, loop_rel)?;
                self.rule_ddo(q)
            }
            Core::Step { input, axis, test } => {
                let q = self.compile(input, env, loop_rel)?;
                self.rule_step(q, *axis, test)
            }
            Core::For { var, input, body } => {
                let q_in = self.compile(input, env, loop_rel)?;
                self.rule_for(var, q_in, body, env)?
            }
            Core::If { cond, then } => {
                let cond_inner: &Core = match &**cond {
                    Core::Ebv(inner) => inner,
                    other => other,
                };
                let q_if = match cond_inner {
                    Core::Comp { input, op, lit } => {
                        let q = self.compile(input, env, loop_rel)?;
                        self.rule_comp(q, *op, lit)
                    }
                    other => self.compile(other, env, loop_rel)?,
                };
                self.rule_if(q_if, then, env)?
            }
            Core::Comp { input, op, lit } => {
                let q = self.compile(input, env, loop_rel)?;
                self.rule_comp(q, *op, lit)
            }
            Core::Ebv(_) => {
                return Err(CompileError::Unsupported(
                    "effective boolean value outside a conditional".into(),
                ))
            }
        };
        self.subexprs.push((label(core), q));
        Ok(q)
    }

    /// `doc(uri)`: select the document node(s), paired with every iteration.
    fn rule_doc(&mut self, uri: &str, loop_rel: NodeId) -> NodeId {
        let doc = self.add(Operator::DocRef);
        let sel = self.add(Operator::Select {
            child: doc,
            pred: Predicate::new(vec![
                Atom::col_eq_const("kind", Value::Kind(crate::infoset::NodeKind::Doc)),
                Atom::col_eq_const("name", Value::Str(uri.to_string())),
            ]),
        });
        let pos1 = self.add(Operator::Attach {
            child: loop_rel,
            col: "pos".into(),
            value: Value::Int(1),
        });
        let cross = self.add(Operator::Cross { left: sel, right: pos1 });
        self.project(cross, &[("iter", "iter"), ("pos", "pos"), ("item", "pre")])
    }

    /// `fs:ddo(e)`: duplicate removal per iteration, positions from document
    /// order.
    fn rule_ddo(&mut self, q: NodeId) -> NodeId {
        let proj = self.project(q, &[("iter", "iter"), ("item", "item")]);
        let distinct = self.add(Operator::Distinct { child: proj });
        self.add(Operator::Rank { child: distinct, col: "pos".into(), order_by: vec!["item".into()] })
    }

    /// A location step: join the document table against the context nodes
    /// (renamed to the `_c` columns), filter by the axis and test
    /// predicates, and re-derive positions from document order.
    fn rule_step(&mut self, q_ctx: NodeId, axis: Axis, test: &NodeTest) -> NodeId {
        let ap = axis_predicate(axis);
        let doc = self.add(Operator::DocRef);
        let ctx_join = self.add(Operator::Join {
            left: doc,
            right: q_ctx,
            pred: Predicate::new(vec![Atom::col_eq_col("pre", "item")]),
        });
        let mut mappings: Vec<(&str, &str)> = vec![("iter", "iter")];
        for c in &ap.context_cols {
            match *c {
                CTX_PRE => mappings.push((CTX_PRE, "pre")),
                CTX_SIZE => mappings.push((CTX_SIZE, "size")),
                CTX_LEVEL => mappings.push((CTX_LEVEL, "level")),
                CTX_FRAG => mappings.push((CTX_FRAG, "frag")),
                other => unreachable!("unexpected context column {other}"),
            }
        }
        let ctx = self.project(ctx_join, &mappings);
        let (kind_atom, name_atom) = test.predicates();
        let atoms: Vec<Atom> = kind_atom.into_iter().chain(name_atom).collect();
        let target = if atoms.is_empty() {
            doc
        } else {
            self.add(Operator::Select { child: doc, pred: Predicate::new(atoms) })
        };
        let axis_join =
            self.add(Operator::Join { left: target, right: ctx, pred: ap.conjuncts.clone() });
        let proj = self.project(axis_join, &[("iter", "iter"), ("item", "pre")]);
        self.add(Operator::Rank { child: proj, col: "pos".into(), order_by: vec!["item".into()] })
    }

    /// A general comparison: join the operand's items back to the document
    /// table, select on the untyped value (string literal) or the typed
    /// decimal (numeric literal), and keep one truth-marker row per
    /// qualifying iteration.
    fn rule_comp(&mut self, q: NodeId, op: CmpOp, lit: &Literal) -> NodeId {
        let doc = self.add(Operator::DocRef);
        let join = self.add(Operator::Join {
            left: doc,
            right: q,
            pred: Predicate::new(vec![Atom::col_eq_col("pre", "item")]),
        });
        let (col, value) = match lit {
            Literal::Str(s) => ("value", Value::Str(s.clone())),
            Literal::Dec(d) => ("data", Value::Dec(*d)),
        };
        let sel = self.add(Operator::Select {
            child: join,
            pred: Predicate::new(vec![Atom {
                lhs: Term::Col(col.into()),
                op,
                rhs: Term::Const(value),
            }]),
        });
        let proj = self.project(sel, &[("iter", "iter")]);
        let distinct = self.add(Operator::Distinct { child: proj });
        let pos1 =
            self.add(Operator::Attach { child: distinct, col: "pos".into(), value: Value::Int(1) });
        self.add(Operator::Attach { child: pos1, col: "item".into(), value: Value::Int(1) })
    }

    /// A conditional: restrict the loop relation to iterations whose
    /// condition plan is non-empty, lift the environment into the restricted
    /// loop, and compile the then branch there.
    fn rule_if(&mut self, q_if: NodeId, then: &Core, env: &Env) -> Result<NodeId, CompileError> {
        let iter1 = self.project(q_if, &[("iter1", "iter")]);
        let loop_if = self.add(Operator::Distinct { child: iter1 });
        let mut lifted = Env::new();
        for (v, q_v) in env {
            let join = self.add(Operator::Join {
                left: loop_if,
                right: *q_v,
                pred: Predicate::new(vec![Atom::col_eq_col("iter1", "iter")]),
            });
            let proj = self.project(join, &[("iter", "iter"), ("pos", "pos"), ("item", "item")]);
            lifted.insert(v.clone(), proj);
        }
        let loop_new = self.project(loop_if, &[("iter", "iter1")]);
        self.compile(then, &lifted, loop_new)
    }

    /// A `for` loop: number the binding sequence, remember the mapping from
    /// outer iterations and sequence positions, compile the body once per
    /// binding, and restore the outer iteration order by ranking over
    /// `(sort, pos)`.
    fn rule_for(
        &mut self,
        var: &str,
        q_in: NodeId,
        body: &Core,
        env: &Env,
    ) -> Result<NodeId, CompileError> {
        let q_x = self.add(Operator::RowId { child: q_in, col: "inner".into() });
        let map = self.project(q_x, &[("outer", "iter"), ("inner", "inner"), ("sort", "pos")]);
        let mut lifted = Env::new();
        for (v, q_v) in env {
            let join = self.add(Operator::Join {
                left: map,
                right: *q_v,
                pred: Predicate::new(vec![Atom::col_eq_col("outer", "iter")]),
            });
            let proj = self.project(join, &[("iter", "inner"), ("pos", "pos"), ("item", "item")]);
            lifted.insert(v.clone(), proj);
        }
        let binding = self.project(q_x, &[("iter", "inner"), ("item", "item")]);
        let binding = self.add(Operator::Attach {
            child: binding,
            col: "pos".into(),
            value: Value::Int(1),
        });
        lifted.insert(var.to_string(), binding);
        let loop_new = self.project(map, &[("iter", "inner")]);
        let q = self.compile(body, &lifted, loop_new)?;
        let joined = self.add(Operator::Join {
            left: q,
            right: map,
            pred: Predicate::new(vec![Atom::col_eq_col("iter", "inner")]),
        });
        let ranked = self.add(Operator::Rank {
            child: joined,
            col: "pos1".into(),
            order_by: vec!["sort".into(), "pos".into()],
        });
        Ok(self.project(ranked, &[("iter", "outer"), ("pos", "pos1"), ("item", "item")]))
    }
}

fn label(core: &Core) -> String {
    match core {
        Core::For { var, .. } => format!("for ${var}"),
        Core::Var(v) => format!("${v}"),
        Core::If { .. } => "if".into(),
        Core::Doc(uri) => format!("doc({uri})"),
        Core::Step { axis, test, .. } => format!("step {}::{}", axis.name(), test.render()),
        Core::Ddo(_) => "ddo".into(),
        Core::Ebv(_) => "ebv".into(),
        Core::Comp { op, .. } => format!("comp {}", op.symbol()),
    }
}

/// Compiles a location step over an explicit context table; the contexts
/// are `(iter, pos, item)` rows.
pub fn compile_step_over_context(
    contexts: &[(i64, i64, i64)],
    axis: Axis,
    test: &NodeTest,
) -> Plan {
    let mut cc = Compiler { store: PlanStore::new(), subexprs: Vec::new() };
    let lit = cc.add(Operator::LitTable {
        cols: vec!["iter".into(), "pos".into(), "item".into()],
        rows: contexts
            .iter()
            .map(|(i, p, v)| vec![Value::Int(*i), Value::Int(*p), Value::Int(*v)])
            .collect(),
    });
    let step = cc.rule_step(lit, axis, test);
    let root = cc.store.add(Operator::Ser { child: step });
    Plan { store: cc.store, root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::evaluator::{eval_node, eval_plan, items_of, oracle};
    use crate::frontend::{normalize, parse};
    use crate::infoset::DocTable;

    fn compile_query(q: &str) -> Compiled {
        compile(&normalize(&parse(q).unwrap())).unwrap()
    }

    fn plan_items(q: &str, doc: &DocTable) -> Vec<i64> {
        let c = compile_query(q);
        items_of(&eval_plan(&c.plan, doc).unwrap())
    }

    #[test]
    fn doc_rule_selects_the_document_node() {
        let doc = corpus::auction_doc();
        let c = compile(&Core::Doc("auction.xml".into())).unwrap();
        let t = eval_plan(&c.plan, &doc).unwrap();
        assert_eq!(items_of(&t), vec![0]);
    }

    #[test]
    fn step_from_explicit_contexts_matches_the_worked_example() {
        // child::text() from the two context nodes (6,1,3) and (8,1,3)
        // yields the two text nodes 7 and 9.
        let doc = corpus::auction_doc();
        let plan = compile_step_over_context(&[(1, 1, 6), (1, 2, 8)], Axis::Child, &NodeTest::Text);
        let t = eval_plan(&plan, &doc).unwrap();
        assert_eq!(items_of(&t), vec![7, 9]);
    }

    #[test]
    fn descendant_step_from_the_root_element() {
        let doc = corpus::auction_doc();
        let plan = compile_step_over_context(
            &[(1, 1, 1)],
            Axis::Descendant,
            &NodeTest::Element(Some("bidder".into())),
        );
        assert_eq!(items_of(&eval_plan(&plan, &doc).unwrap()), vec![5]);
    }

    #[test]
    fn self_step_keeps_items_and_recomputes_positions() {
        let doc = corpus::auction_doc();
        let plan = compile_step_over_context(&[(1, 7, 8), (1, 2, 6)], Axis::SelfAxis, &NodeTest::AnyNode);
        assert_eq!(items_of(&eval_plan(&plan, &doc).unwrap()), vec![6, 8]);
    }

    #[test]
    fn q1_evaluates_to_the_bidder_bearing_auction() {
        let doc = corpus::auction_doc();
        assert_eq!(plan_items(corpus::Q1, &doc), vec![1]);
    }

    #[test]
    fn empty_binding_sequence_yields_an_empty_result() {
        let doc = corpus::auction_doc();
        assert_eq!(
            plan_items(r#"for $x in doc("auction.xml")/child::nosuch return $x"#, &doc),
            Vec::<i64>::new()
        );
    }

    #[test]
    fn for_body_step_follows_binding_order() {
        let doc = corpus::auction_doc();
        assert_eq!(
            plan_items(
                r#"for $x in doc("auction.xml")/descendant::bidder return $x/child::time"#,
                &doc
            ),
            vec![6]
        );
    }

    #[test]
    fn nested_for_preserves_outer_then_inner_order() {
        let doc = corpus::site_doc();
        let q = r#"for $x in doc("site.xml")//open_auction return for $y in $x/descendant::time return $y"#;
        let expected = oracle::eval_xquery(&normalize(&parse(q).unwrap()), &doc);
        let got = plan_items(q, &doc);
        assert_eq!(got, expected.iter().map(|&p| p as i64).collect::<Vec<_>>());
    }

    #[test]
    fn comparison_produces_truth_markers_per_iteration() {
        let doc = corpus::auction_doc();
        // initial (pre 3) has decimal value 15.0 > 10.
        assert_eq!(
            plan_items(r#"doc("auction.xml")/descendant::initial[self::node() > 10]"#, &doc),
            vec![3]
        );
        assert_eq!(
            plan_items(r#"doc("auction.xml")/descendant::initial[self::node() > 20]"#, &doc),
            Vec::<i64>::new()
        );
        assert_eq!(
            plan_items(r#"doc("auction.xml")/descendant::time[self::node() = "18:43"]"#, &doc),
            vec![6]
        );
    }

    #[test]
    fn ddo_deduplicates_and_orders() {
        let doc = corpus::nested_doc();
        // //box//part visits inner parts through several box contexts.
        let q = r#"doc("nested.xml")/descendant::box/descendant::part"#;
        let expected = oracle::eval_xquery(&normalize(&parse(q).unwrap()), &doc);
        let got = plan_items(q, &doc);
        assert_eq!(got, expected.iter().map(|&p| p as i64).collect::<Vec<_>>());
        let mut dedup = got.clone();
        dedup.dedup();
        assert_eq!(got, dedup, "ddo removed duplicates");
    }

    #[test]
    fn compiled_subexpressions_keep_the_ternary_schema_and_iter_pos_keys() {
        let doc = corpus::site_doc();
        for q in [
            corpus::Q1,
            r#"for $x in doc("site.xml")//open_auction return if ($x/bidder) then $x/itemref else ()"#,
            r#"doc("site.xml")//item[price > 500]/name"#,
        ] {
            let c = compile_query(q);
            for (lbl, node) in &c.subexprs {
                let mut cols = c.plan.cols(*node).to_vec();
                cols.sort();
                assert_eq!(cols, &["item", "iter", "pos"], "{lbl} schema");
                let t = eval_node(&c.plan, *node, &doc).unwrap();
                let (i, p) = (t.col_idx("iter").unwrap(), t.col_idx("pos").unwrap());
                let mut seen = std::collections::HashSet::new();
                for r in &t.rows {
                    assert!(
                        seen.insert((r[i].clone(), r[p].clone())),
                        "{lbl}: duplicate (iter,pos) in {q}"
                    );
                }
            }
        }
    }

    #[test]
    fn plan_validates_for_grammar_queries() {
        for q in [
            corpus::Q1,
            r#"for $x in doc("nested.xml")//box return $x/part"#,
            r#"if (doc("site.xml")//person) then doc("site.xml")//item else ()"#,
        ] {
            let c = compile_query(q);
            let errs = c.plan.validate();
            assert!(errs.is_empty(), "{q}: {errs:?}");
        }
    }
}
