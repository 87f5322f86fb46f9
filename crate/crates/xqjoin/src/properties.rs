//! Plan property inference: `icols`, `const`, `key`, and `set`.
//!
//! The rewrite rules inspect these properties instead of whole plan regions,
//! which keeps the isolation process peephole-style. `icols` and `set` flow
//! top-down (accumulating where the DAG walk enters a node through several
//! parents), `const` and `key` flow bottom-up. Ascending node id order is a
//! topological order, so each pass is a single sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::algebra::{Col, NodeId, Operator, Plan, Value};

/// Upper bound on tracked candidate keys per node; keys are kept minimal
/// under set inclusion, so the bound is rarely reached.
const MAX_KEYS: usize = 24;

pub type ColSet = BTreeSet<Col>;
pub type KeySet = BTreeSet<ColSet>;

#[derive(Debug, Clone, Default)]
pub struct PropertyStore {
    /// Input columns strictly required to evaluate the node's upstream plan.
    pub icols: HashMap<NodeId, ColSet>,
    /// Column-to-constant bindings holding on every output row.
    pub consts: HashMap<NodeId, BTreeMap<Col, Value>>,
    /// Candidate keys (sets of columns whose combination is duplicate-free).
    pub keys: HashMap<NodeId, KeySet>,
    /// Whether the node's output rows undergo duplicate elimination
    /// upstream.
    pub set: HashMap<NodeId, bool>,
}

impl PropertyStore {
    pub fn icols(&self, n: NodeId) -> ColSet {
        self.icols.get(&n).cloned().unwrap_or_default()
    }

    pub fn consts(&self, n: NodeId) -> BTreeMap<Col, Value> {
        self.consts.get(&n).cloned().unwrap_or_default()
    }

    pub fn keys(&self, n: NodeId) -> KeySet {
        self.keys.get(&n).cloned().unwrap_or_default()
    }

    pub fn set(&self, n: NodeId) -> bool {
        *self.set.get(&n).unwrap_or(&true)
    }

    /// One line per node, appended to plan dumps for debugging.
    pub fn dump_for(&self, plan: &Plan) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let order = plan.dump_order();
        let number: HashMap<NodeId, usize> =
            order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        for n in &order {
            let icols_set = self.icols(*n);
            let icols: Vec<&str> = icols_set.iter().map(|c| c.as_str()).collect();
            let consts: Vec<String> =
                self.consts(*n).iter().map(|(c, v)| format!("{c}={v}")).collect();
            let keys: Vec<String> = self
                .keys(*n)
                .iter()
                .map(|k| format!("{{{}}}", k.iter().cloned().collect::<Vec<_>>().join(",")))
                .collect();
            let _ = writeln!(
                out,
                "n{} icols={{{}}} const={{{}}} key={{{}}} set={}",
                number[n],
                icols.join(","),
                consts.join(","),
                keys.join(","),
                self.set(*n),
            );
        }
        out
    }
}

/// Runs all four passes over the reachable plan.
pub fn infer(plan: &Plan) -> PropertyStore {
    let mut store = PropertyStore::default();
    let nodes = plan.store.reachable_set(plan.root);
    infer_const(plan, &nodes, &mut store);
    infer_key(plan, &nodes, &mut store);
    infer_icols(plan, &nodes, &mut store);
    infer_set(plan, &nodes, &mut store);
    store
}

/// Top-down demand inference, seeded with `{pos, item}` at the
/// serialization point.
fn infer_icols(plan: &Plan, nodes: &[NodeId], store: &mut PropertyStore) {
    for &n in nodes {
        store.icols.entry(n).or_default();
    }
    for &n in nodes.iter().rev() {
        let demand = store.icols(n);
        let mut push = |child: NodeId, cols: ColSet| {
            store.icols.entry(child).or_default().extend(cols);
        };
        match plan.op(n) {
            Operator::Ser { child } => {
                push(*child, ["pos".to_string(), "item".to_string()].into_iter().collect());
            }
            Operator::Project { child, mappings } => {
                let sources: ColSet = mappings
                    .iter()
                    .filter(|(t, _)| demand.contains(t))
                    .map(|(_, s)| s.clone())
                    .collect();
                push(*child, sources);
            }
            Operator::Select { child, pred } => {
                let mut cols = demand.clone();
                cols.extend(pred.cols());
                push(*child, cols);
            }
            Operator::Join { left, right, pred } => {
                let mut cols = demand.clone();
                cols.extend(pred.cols());
                for side in [left, right] {
                    let side_cols = plan.store.col_set(*side);
                    push(*side, cols.iter().filter(|c| side_cols.contains(*c)).cloned().collect());
                }
            }
            Operator::Cross { left, right } => {
                for side in [left, right] {
                    let side_cols = plan.store.col_set(*side);
                    push(
                        *side,
                        demand.iter().filter(|c| side_cols.contains(*c)).cloned().collect(),
                    );
                }
            }
            Operator::Distinct { child } => push(*child, demand.clone()),
            Operator::Attach { child, col, .. } | Operator::RowId { child, col } => {
                let mut cols = demand.clone();
                cols.remove(col);
                push(*child, cols);
            }
            Operator::Rank { child, col, order_by } => {
                let mut cols = demand.clone();
                cols.remove(col);
                cols.extend(order_by.iter().cloned());
                push(*child, cols);
            }
            Operator::DocRef | Operator::LitTable { .. } => {}
        }
    }
}

/// Bottom-up constant-column inference, seeded at the leaves.
fn infer_const(plan: &Plan, nodes: &[NodeId], store: &mut PropertyStore) {
    for &n in nodes {
        let c = match plan.op(n) {
            Operator::DocRef => BTreeMap::new(),
            Operator::LitTable { cols, rows } => {
                let mut m = BTreeMap::new();
                for (i, col) in cols.iter().enumerate() {
                    if let Some(first) = rows.first() {
                        if rows.iter().all(|r| r[i] == first[i]) {
                            m.insert(col.clone(), first[i].clone());
                        }
                    }
                }
                m
            }
            Operator::Ser { child }
            | Operator::Select { child, .. }
            | Operator::Distinct { child }
            | Operator::RowId { child, .. }
            | Operator::Rank { child, .. } => store.consts(*child),
            Operator::Project { child, mappings } => {
                let inner = store.consts(*child);
                mappings
                    .iter()
                    .filter_map(|(t, s)| inner.get(s).map(|v| (t.clone(), v.clone())))
                    .collect()
            }
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                let mut m = store.consts(*left);
                for (c, v) in store.consts(*right) {
                    m.entry(c).or_insert(v);
                }
                m
            }
            Operator::Attach { child, col, value } => {
                let mut m = store.consts(*child);
                m.insert(col.clone(), value.clone());
                m
            }
        };
        store.consts.insert(n, c);
    }
}

/// Keeps only minimal keys and caps the set size.
fn prune_keys(mut keys: KeySet) -> KeySet {
    let list: Vec<ColSet> = keys.iter().cloned().collect();
    keys.retain(|k| !list.iter().any(|other| other != k && other.is_subset(k)));
    while keys.len() > MAX_KEYS {
        // Drop the widest keys first.
        let widest = keys.iter().max_by_key(|k| k.len()).cloned().unwrap();
        keys.remove(&widest);
    }
    keys
}

/// Bottom-up candidate-key inference.
fn infer_key(plan: &Plan, nodes: &[NodeId], store: &mut PropertyStore) {
    for &n in nodes {
        let k = match plan.op(n) {
            Operator::DocRef => [["pre".to_string()].into_iter().collect()].into_iter().collect(),
            Operator::LitTable { cols, rows } => {
                let mut ks = KeySet::new();
                if rows.len() <= 1 {
                    for c in cols {
                        ks.insert([c.clone()].into_iter().collect());
                    }
                } else {
                    for (i, c) in cols.iter().enumerate() {
                        let mut seen = std::collections::HashSet::new();
                        if rows.iter().all(|r| seen.insert(r[i].clone())) {
                            ks.insert([c.clone()].into_iter().collect());
                        }
                    }
                }
                ks
            }
            Operator::Ser { child } | Operator::Select { child, .. } => store.keys(*child),
            Operator::Project { child, mappings } => {
                let sources: ColSet = mappings.iter().map(|(_, s)| s.clone()).collect();
                let mut ks = KeySet::new();
                for k in store.keys(*child) {
                    if !k.is_subset(&sources) {
                        continue;
                    }
                    // Each way of renaming the key through the projection
                    // yields a key; a column may be projected several times.
                    let mut images: Vec<ColSet> = vec![ColSet::new()];
                    for source in &k {
                        let targets: Vec<&Col> = mappings
                            .iter()
                            .filter(|(_, s)| s == source)
                            .map(|(t, _)| t)
                            .collect();
                        let mut next = Vec::new();
                        for img in &images {
                            for t in &targets {
                                let mut img = img.clone();
                                img.insert((*t).clone());
                                next.push(img);
                            }
                        }
                        images = next;
                        if images.len() > MAX_KEYS {
                            images.truncate(MAX_KEYS);
                        }
                    }
                    ks.extend(images);
                }
                ks
            }
            Operator::Join { left, right, pred } => {
                let (lk, rk) = (store.keys(*left), store.keys(*right));
                let mut ks = KeySet::new();
                let equi = pred.as_col_equality().and_then(|(a, b)| {
                    let lcols = plan.store.col_set(*left);
                    let rcols = plan.store.col_set(*right);
                    if lcols.contains(a) && rcols.contains(b) {
                        Some((a.clone(), b.clone()))
                    } else if lcols.contains(b) && rcols.contains(a) {
                        Some((b.clone(), a.clone()))
                    } else {
                        None
                    }
                });
                if let Some((a, b)) = equi {
                    let a_key: ColSet = [a.clone()].into_iter().collect();
                    let b_key: ColSet = [b.clone()].into_iter().collect();
                    if rk.contains(&b_key) {
                        ks.extend(lk.iter().cloned());
                    }
                    if lk.contains(&a_key) {
                        ks.extend(rk.iter().cloned());
                    }
                    if rk.contains(&b_key) {
                        for k1 in &lk {
                            for k2 in &rk {
                                let mut k: ColSet = k1.iter().filter(|c| **c != a).cloned().collect();
                                k.extend(k2.iter().cloned());
                                ks.insert(k);
                            }
                        }
                    }
                    if lk.contains(&a_key) {
                        for k1 in &lk {
                            for k2 in &rk {
                                let mut k: ColSet = k1.clone();
                                k.extend(k2.iter().filter(|c| **c != b).cloned());
                                ks.insert(k);
                            }
                        }
                    }
                } else {
                    for k1 in &lk {
                        for k2 in &rk {
                            let mut k = k1.clone();
                            k.extend(k2.iter().cloned());
                            ks.insert(k);
                        }
                    }
                }
                ks
            }
            Operator::Cross { left, right } => {
                let mut ks = KeySet::new();
                for k1 in &store.keys(*left) {
                    for k2 in &store.keys(*right) {
                        let mut k = k1.clone();
                        k.extend(k2.iter().cloned());
                        ks.insert(k);
                    }
                }
                ks
            }
            Operator::Distinct { child } => {
                let mut ks = store.keys(*child);
                ks.insert(plan.cols(*child).iter().cloned().collect());
                ks
            }
            Operator::Attach { child, .. } => store.keys(*child),
            Operator::RowId { child, col } => {
                let mut ks = store.keys(*child);
                ks.insert([col.clone()].into_iter().collect());
                ks
            }
            Operator::Rank { child, col, order_by } => {
                let mut ks = store.keys(*child);
                let order: ColSet = order_by.iter().cloned().collect();
                for k in store.keys(*child) {
                    if !k.is_disjoint(&order) {
                        let mut nk: ColSet = [col.clone()].into_iter().collect();
                        nk.extend(k.difference(&order).cloned());
                        ks.insert(nk);
                    }
                }
                ks
            }
        };
        store.keys.insert(n, prune_keys(k));
    }
}

/// Top-down inference of the Boolean `set` property; initialized to true
/// everywhere except below the serialization point, a duplicate elimination
/// upstream keeps it true.
fn infer_set(plan: &Plan, nodes: &[NodeId], store: &mut PropertyStore) {
    for &n in nodes {
        store.set.insert(n, true);
    }
    for &n in nodes.iter().rev() {
        let own = store.set(n);
        let mut meet = |child: NodeId, v: bool| {
            let e = store.set.entry(child).or_insert(true);
            *e = *e && v;
        };
        match plan.op(n) {
            Operator::Ser { child } => meet(*child, false),
            Operator::Distinct { child } => meet(*child, true),
            Operator::Project { child, .. }
            | Operator::Select { child, .. }
            | Operator::Attach { child, .. }
            | Operator::RowId { child, .. }
            | Operator::Rank { child, .. } => meet(*child, own),
            Operator::Join { left, right, .. } | Operator::Cross { left, right } => {
                meet(*left, own);
                meet(*right, own);
            }
            Operator::DocRef | Operator::LitTable { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Atom, Operator, Plan, PlanStore, Predicate, Value};
    use crate::infoset::NodeKind;

    fn set_of(cols: &[&str]) -> ColSet {
        cols.iter().map(|c| c.to_string()).collect()
    }

    #[test]
    fn icols_seeds_pos_item_below_ser_and_adds_selection_columns() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let sel = s.add(Operator::Select {
            child: doc,
            pred: Predicate::new(vec![Atom::col_eq_const("kind", Value::Kind(NodeKind::Elem))]),
        });
        let proj = s.add(Operator::Project {
            child: sel,
            mappings: vec![("item".into(), "pre".into()), ("pos".into(), "pre".into())],
        });
        let ser = s.add(Operator::Ser { child: proj });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert_eq!(p.icols(proj), set_of(&["pos", "item"]));
        assert_eq!(p.icols(sel), set_of(&["pre"]));
        assert!(p.icols(doc).contains("kind"), "selection demands its predicate columns");
        assert!(p.icols(doc).contains("pre"));
    }

    #[test]
    fn attach_removes_its_column_from_demand_and_binds_a_constant() {
        let mut s = PlanStore::new();
        let lit = s.add(Operator::LitTable {
            cols: vec!["iter".into()],
            rows: vec![vec![Value::Int(1)]],
        });
        let at = s.add(Operator::Attach { child: lit, col: "pos".into(), value: Value::Int(1) });
        let proj = s.add(Operator::Project {
            child: at,
            mappings: vec![("pos".into(), "pos".into()), ("item".into(), "iter".into())],
        });
        let ser = s.add(Operator::Ser { child: proj });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert_eq!(p.icols(lit), set_of(&["iter"]));
        assert_eq!(p.consts(at).get("pos"), Some(&Value::Int(1)));
        // Projection renames constant bindings.
        assert_eq!(p.consts(proj).get("pos"), Some(&Value::Int(1)));
        assert_eq!(p.consts(proj).get("item"), Some(&Value::Int(1)));
        assert!(p.consts.get(&lit).unwrap().contains_key("iter"));
    }

    #[test]
    fn doc_has_no_constants_and_pre_as_key() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let proj = s.add(Operator::Project {
            child: doc,
            mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
        });
        let ser = s.add(Operator::Ser { child: proj });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert!(p.consts(doc).is_empty());
        assert_eq!(p.keys(doc), [set_of(&["pre"])].into_iter().collect::<KeySet>());
    }

    #[test]
    fn rowid_and_distinct_contribute_keys() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let proj = s.add(Operator::Project {
            child: doc,
            mappings: vec![("item".into(), "name".into())],
        });
        let distinct = s.add(Operator::Distinct { child: proj });
        let rid = s.add(Operator::RowId { child: distinct, col: "inner".into() });
        let top = s.add(Operator::Project {
            child: rid,
            mappings: vec![("pos".into(), "inner".into()), ("item".into(), "item".into())],
        });
        let ser = s.add(Operator::Ser { child: top });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert!(p.keys(rid).contains(&set_of(&["inner"])));
        assert!(p.keys(distinct).contains(&set_of(&["item"])));
    }

    #[test]
    fn equi_join_with_keyed_side_preserves_the_other_sides_keys() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let items = s.add(Operator::Project {
            child: doc,
            mappings: vec![("item".into(), "pre".into()), ("iter".into(), "level".into())],
        });
        let join = s.add(Operator::Join {
            left: doc,
            right: items,
            pred: Predicate::new(vec![Atom::col_eq_col("pre", "item")]),
        });
        let top = s.add(Operator::Project {
            child: join,
            mappings: vec![("pos".into(), "item".into()), ("item".into(), "item".into())],
        });
        let ser = s.add(Operator::Ser { child: top });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        // {item} is a key of the right side, so left keys survive; {pre} is a
        // key of the left side, so right keys survive.
        assert!(p.keys(join).contains(&set_of(&["pre"])));
        assert!(p.keys(join).contains(&set_of(&["item"])));
    }

    #[test]
    fn rank_over_key_overlapping_order_produces_a_rank_key() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let proj = s.add(Operator::Project {
            child: doc,
            mappings: vec![("item".into(), "pre".into())],
        });
        let rank = s.add(Operator::Rank { child: proj, col: "pos".into(), order_by: vec!["item".into()] });
        let ser = s.add(Operator::Ser { child: rank });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert!(p.keys(rank).contains(&set_of(&["pos"])));
        // The projection renames the doc key into a singleton item key.
        assert!(p.keys(proj).contains(&set_of(&["item"])));
    }

    #[test]
    fn set_is_false_under_ser_true_under_distinct_and_meets_across_parents() {
        let mut s = PlanStore::new();
        let doc = s.add(Operator::DocRef);
        let shared = s.add(Operator::Project {
            child: doc,
            mappings: vec![("pos".into(), "pre".into()), ("item".into(), "pre".into())],
        });
        let d = s.add(Operator::Distinct { child: shared });
        let merge = s.add(Operator::Join {
            left: d,
            right: shared,
            pred: Predicate::new(vec![]),
        });
        let ser = s.add(Operator::Ser { child: merge });
        let plan = Plan { store: s, root: ser };
        let p = infer(&plan);
        assert!(!p.set(merge), "directly under ser");
        // shared has parents distinct (true) and the join (false): meet false.
        assert!(!p.set(shared));
    }
}
