//! Independent naive XQuery evaluator, used as the oracle in differential
//! tests. It walks the document tree directly (parent pointers from the
//! shredding pass) and never touches the algebra.

use std::collections::HashMap;

use crate::algebra::{CmpOp, Value};
use crate::frontend::{Core, Literal};
use crate::infoset::{axis_holds_tree, DocTable, NodeKind, NodeTest};

/// Evaluates a core expression to its ordered item sequence (pre ranks).
pub fn eval_xquery(c: &Core, doc: &DocTable) -> Vec<u32> {
    let mut env = HashMap::new();
    items(c, doc, &mut env)
}

fn items(c: &Core, doc: &DocTable, env: &mut HashMap<String, u32>) -> Vec<u32> {
    match c {
        Core::Doc(uri) => doc
            .rows
            .iter()
            .filter(|r| r.kind == NodeKind::Doc && r.name.as_deref() == Some(uri))
            .map(|r| r.pre)
            .collect(),
        Core::Var(v) => vec![*env.get(v).expect("variable bound by an enclosing for")],
        Core::For { var, input, body } => {
            let bindings = items(input, doc, env);
            let mut out = Vec::new();
            for b in bindings {
                let prev = env.insert(var.clone(), b);
                out.extend(items(body, doc, env));
                match prev {
                    Some(p) => {
                        env.insert(var.clone(), p);
                    }
                    None => {
                        env.remove(var);
                    }
                }
            }
            out
        }
        Core::If { cond, then } => {
            if truth(cond, doc, env) {
                items(then, doc, env)
            } else {
                Vec::new()
            }
        }
        Core::Step { input, axis, test } => {
            let ctxs = items(input, doc, env);
            let mut out = Vec::new();
            for ctx in &ctxs {
                for target in 0..doc.rows.len() as u32 {
                    if axis_holds_tree(doc, *axis, *ctx, target) && test_matches(doc, test, target) {
                        out.push(target);
                    }
                }
            }
            // Within one evaluation the step result is in document order;
            // duplicates from different context nodes are retained.
            out.sort_unstable();
            out
        }
        Core::Ddo(inner) => {
            let mut v = items(inner, doc, env);
            v.sort_unstable();
            v.dedup();
            v
        }
        Core::Ebv(_) | Core::Comp { .. } => {
            panic!("effective boolean value outside a conditional")
        }
    }
}

fn truth(c: &Core, doc: &DocTable, env: &mut HashMap<String, u32>) -> bool {
    match c {
        Core::Ebv(inner) => truth(inner, doc, env),
        Core::Comp { input, op, lit } => {
            let nodes = items(input, doc, env);
            nodes.iter().any(|&n| compare_node(doc, n, *op, lit))
        }
        other => !items(other, doc, env).is_empty(),
    }
}

/// Existential general comparison of one node against a literal: string
/// literals compare against the untyped value, numeric literals against the
/// typed decimal.
fn compare_node(doc: &DocTable, node: u32, op: CmpOp, lit: &Literal) -> bool {
    let row = &doc.rows[node as usize];
    let (lhs, rhs) = match lit {
        Literal::Str(s) => {
            let Some(v) = &row.value else { return false };
            (Value::Str(v.clone()), Value::Str(s.clone()))
        }
        Literal::Dec(d) => {
            let Some(v) = row.data else { return false };
            (Value::Dec(v), Value::Dec(*d))
        }
    };
    lhs.cmp_sql(&rhs).map(|o| op.holds(o)).unwrap_or(false)
}

fn test_matches(doc: &DocTable, test: &NodeTest, node: u32) -> bool {
    let row = &doc.rows[node as usize];
    match test {
        NodeTest::Element(name) => {
            row.kind == NodeKind::Elem
                && name.as_ref().map(|n| row.name.as_deref() == Some(n)).unwrap_or(true)
        }
        NodeTest::Attribute(name) => {
            row.kind == NodeKind::Attr
                && name.as_ref().map(|n| row.name.as_deref() == Some(n)).unwrap_or(true)
        }
        NodeTest::Text => row.kind == NodeKind::Text,
        NodeTest::AnyNode => true,
        NodeTest::Document => row.kind == NodeKind::Doc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::{normalize, parse};

    fn run(q: &str, doc: &DocTable) -> Vec<u32> {
        eval_xquery(&normalize(&parse(q).unwrap()), doc)
    }

    #[test]
    fn q1_selects_the_auction_with_a_bidder() {
        let doc = corpus::auction_doc();
        assert_eq!(run(corpus::Q1, &doc), vec![1]);
    }

    #[test]
    fn document_node_lookup() {
        let doc = corpus::auction_doc();
        assert_eq!(run(r#"doc("auction.xml")"#, &doc), vec![0]);
        assert_eq!(run(r#"doc("missing.xml")"#, &doc), Vec::<u32>::new());
    }

    #[test]
    fn empty_step_yields_the_empty_sequence() {
        let doc = corpus::auction_doc();
        assert_eq!(run(r#"doc("auction.xml")/child::nosuch"#, &doc), Vec::<u32>::new());
    }

    #[test]
    fn oracle_agrees_between_surface_and_core_forms() {
        // The oracle evaluates normalized input; re-normalizing is a no-op.
        let doc = corpus::site_doc();
        for q in [
            r#"doc("site.xml")//open_auction[bidder]"#,
            r#"for $x in doc("site.xml")//bidder return $x/child::time"#,
            r#"doc("site.xml")//item[price > 500]"#,
        ] {
            let c = normalize(&parse(q).unwrap());
            let again = crate::frontend::normalize_core(&c);
            assert_eq!(eval_xquery(&c, &doc), eval_xquery(&again, &doc), "{q}");
        }
    }

    #[test]
    fn for_loop_concatenates_in_binding_order() {
        let doc = corpus::site_doc();
        let items = run(r#"for $x in doc("site.xml")//bidder return $x/child::time"#, &doc);
        let mut sorted = items.clone();
        sorted.sort_unstable();
        assert_eq!(items, sorted, "bidders appear in document order, so do their times");
        assert_eq!(items.len(), 3);
    }

    #[test]
    fn comparison_against_string_value() {
        let doc = corpus::auction_doc();
        let q = r#"doc("auction.xml")//time[self::node() = "18:43"]"#;
        assert_eq!(run(q, &doc), vec![6]);
    }
}
