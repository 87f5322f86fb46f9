//! Seeded random query generator over the supported grammar, for
//! differential testing.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::algebra::CmpOp;
use crate::frontend::{BoolExpr, Expr, Literal};
use crate::infoset::{Axis, NodeTest};

/// Name and literal pools the generator draws from.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub uris: Vec<String>,
    pub tags: Vec<String>,
    pub strings: Vec<String>,
    pub decimals: Vec<f64>,
}

impl Vocabulary {
    pub fn from_doc(uri: &str, doc: &crate::infoset::DocTable) -> Vocabulary {
        let (strings, decimals) = crate::corpus::literal_vocabulary(doc);
        Vocabulary {
            uris: vec![uri.to_string()],
            tags: crate::corpus::tag_vocabulary(doc),
            strings,
            decimals,
        }
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    vocab: &'a Vocabulary,
    scope: Vec<String>,
    fresh: usize,
}

/// Derives a random well-scoped expression, deterministic per seed.
pub fn gen_query(seed: u64, depth: u32, vocab: &Vocabulary) -> Expr {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), vocab, scope: Vec::new(), fresh: 0 };
    g.expr(depth)
}

impl<'a> Gen<'a> {
    fn expr(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return self.leaf();
        }
        match self.rng.gen_range(0..100u32) {
            0..=39 => {
                let input = self.expr(depth - 1);
                let (axis, test) = self.step();
                Expr::Step { input: Box::new(input), axis, test }
            }
            40..=54 => {
                let var = format!("q{}", self.fresh);
                self.fresh += 1;
                let input = self.expr(depth - 1);
                self.scope.push(var.clone());
                let body = self.expr(depth - 1);
                self.scope.pop();
                Expr::For { var, input: Box::new(input), body: Box::new(body) }
            }
            55..=69 => {
                let cond = self.bool_expr(depth - 1, false);
                let then = self.expr(depth - 1);
                Expr::If { cond: Box::new(cond), then: Box::new(then) }
            }
            70..=84 => {
                let input = self.expr(depth - 1);
                let pred = self.bool_expr(depth.saturating_sub(2), true);
                Expr::Pred { input: Box::new(input), pred: Box::new(pred) }
            }
            _ => self.leaf(),
        }
    }

    fn leaf(&mut self) -> Expr {
        if !self.scope.is_empty() && self.rng.gen_bool(0.5) {
            let v = self.scope[self.rng.gen_range(0..self.scope.len())].clone();
            Expr::Var(v)
        } else {
            let uri = self.vocab.uris[self.rng.gen_range(0..self.vocab.uris.len())].clone();
            Expr::Doc(uri)
        }
    }

    fn bool_expr(&mut self, depth: u32, in_pred: bool) -> BoolExpr {
        let lhs = if in_pred {
            // Relative paths are the common shape inside predicates.
            let mut e = Expr::ContextItem;
            let steps = 1 + self.rng.gen_range(0..2u32.min(depth + 1));
            for _ in 0..steps {
                let (axis, test) = self.step();
                e = Expr::Step { input: Box::new(e), axis, test };
            }
            e
        } else {
            self.expr(depth)
        };
        if self.rng.gen_bool(0.4) {
            let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
                .choose(&mut self.rng)
                .unwrap();
            let lit = if !self.vocab.decimals.is_empty() && self.rng.gen_bool(0.6) {
                Literal::Dec(self.vocab.decimals[self.rng.gen_range(0..self.vocab.decimals.len())])
            } else if !self.vocab.strings.is_empty() {
                Literal::Str(self.vocab.strings[self.rng.gen_range(0..self.vocab.strings.len())].clone())
            } else {
                Literal::Dec(1.0)
            };
            BoolExpr::Comp { lhs, op, lit }
        } else {
            BoolExpr::Exists(lhs)
        }
    }

    fn step(&mut self) -> (Axis, NodeTest) {
        let axis = match self.rng.gen_range(0..100u32) {
            0..=29 => Axis::Child,
            30..=49 => Axis::Descendant,
            50..=57 => Axis::DescendantOrSelf,
            58..=62 => Axis::SelfAxis,
            63..=70 => Axis::Parent,
            71..=76 => Axis::Ancestor,
            77..=80 => Axis::AncestorOrSelf,
            81..=86 => Axis::Following,
            87..=92 => Axis::Preceding,
            _ => Axis::Attribute,
        };
        let test = if axis == Axis::Attribute {
            match self.rng.gen_range(0..100u32) {
                0..=69 => NodeTest::Attribute(self.pick_tag()),
                _ => NodeTest::Attribute(None),
            }
        } else {
            match self.rng.gen_range(0..100u32) {
                0..=49 => NodeTest::Element(self.pick_tag()),
                50..=64 => NodeTest::Element(None),
                65..=79 => NodeTest::Text,
                _ => NodeTest::AnyNode,
            }
        };
        (axis, test)
    }

    fn pick_tag(&mut self) -> Option<String> {
        if self.vocab.tags.is_empty() {
            None
        } else {
            Some(self.vocab.tags[self.rng.gen_range(0..self.vocab.tags.len())].clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::frontend::{parse, render};

    fn vocab() -> Vocabulary {
        Vocabulary::from_doc("site.xml", &corpus::site_doc())
    }

    #[test]
    fn deterministic_per_seed() {
        let v = vocab();
        for seed in 0..20 {
            assert_eq!(gen_query(seed, 3, &v), gen_query(seed, 3, &v));
        }
    }

    #[test]
    fn depth_one_is_a_small_expression() {
        let v = vocab();
        let e = gen_query(0, 1, &v);
        // Just a sanity bound: depth 1 cannot nest deeper than one level.
        let rendered = render(&e);
        assert!(rendered.len() < 200, "{rendered}");
    }

    #[test]
    fn rendered_queries_parse_back_to_the_same_ast() {
        let v = vocab();
        for seed in 0..300 {
            let e = gen_query(seed, 4, &v);
            let text = render(&e);
            let back = parse(&text).unwrap_or_else(|err| panic!("seed {seed}: {err}\n{text}"));
            assert_eq!(e, back, "seed {seed}: {text}");
        }
    }
}
