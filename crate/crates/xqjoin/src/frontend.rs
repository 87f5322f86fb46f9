//! Parser and normalizer for the supported XQuery fragment.
//!
//! The surface grammar covers `for`/`in`/`return`, conditionals with an
//! empty-sequence `else`, `doc(...)`, location steps along the ten supported
//! axes (abbreviated `/`, `//`, `@` forms included), path predicates `e[p]`,
//! and general comparisons against literals. Normalization desugars
//! predicates into `for`/`if` and makes duplicate-order semantics explicit:
//! every step is wrapped in `fs:ddo(...)` and every condition in
//! `fn:boolean(...)`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::algebra::CmpOp;
use crate::infoset::{Axis, NodeTest};

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Dec(f64),
}

impl std::fmt::Display for Literal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "\"{s}\""),
            Literal::Dec(d) => {
                if d.fract() == 0.0 {
                    write!(f, "{}", *d as i64)
                } else {
                    write!(f, "{d}")
                }
            }
        }
    }
}

/// Surface syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    For { var: String, input: Box<Expr>, body: Box<Expr> },
    Var(String),
    If { cond: Box<BoolExpr>, then: Box<Expr> },
    Doc(String),
    Step { input: Box<Expr>, axis: Axis, test: NodeTest },
    /// Path predicate `input[pred]`; desugared during normalization.
    Pred { input: Box<Expr>, pred: Box<BoolExpr> },
    /// The implicit context inside a path predicate.
    ContextItem,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Exists(Expr),
    Comp { lhs: Expr, op: CmpOp, lit: Literal },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unbound variable ${name} at line {line}, column {col}")]
    Unbound { name: String, line: usize, col: usize },
    #[error("unsupported axis {axis} at line {line}, column {col}")]
    UnsupportedAxis { axis: String, line: usize, col: usize },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Var(String),
    Str(String),
    Num(f64),
    Slash,
    DoubleSlash,
    At,
    Axis2, // ::
    LParen,
    RParen,
    LBracket,
    RBracket,
    Star,
    Cmp(CmpOp),
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

struct Token {
    tok: Tok,
    offset: usize,
}

impl<'a> Lexer<'a> {
    fn line_col(&self, offset: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for (i, c) in self.src.char_indices() {
            if i >= offset {
                break;
            }
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn tokens(&mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.bytes.get(self.pos), Some(b' ' | b'\t' | b'\r' | b'\n')) {
                self.pos += 1;
            }
            let offset = self.pos;
            let Some(&b) = self.bytes.get(self.pos) else {
                out.push(Token { tok: Tok::Eof, offset });
                return Ok(out);
            };
            let tok = match b {
                b'/' => {
                    self.pos += 1;
                    if self.bytes.get(self.pos) == Some(&b'/') {
                        self.pos += 1;
                        Tok::DoubleSlash
                    } else {
                        Tok::Slash
                    }
                }
                b'@' => {
                    self.pos += 1;
                    Tok::At
                }
                b':' if self.bytes.get(self.pos + 1) == Some(&b':') => {
                    self.pos += 2;
                    Tok::Axis2
                }
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b'[' => {
                    self.pos += 1;
                    Tok::LBracket
                }
                b']' => {
                    self.pos += 1;
                    Tok::RBracket
                }
                b'*' => {
                    self.pos += 1;
                    Tok::Star
                }
                b'=' => {
                    self.pos += 1;
                    Tok::Cmp(CmpOp::Eq)
                }
                b'!' if self.bytes.get(self.pos + 1) == Some(&b'=') => {
                    self.pos += 2;
                    Tok::Cmp(CmpOp::Ne)
                }
                b'<' => {
                    self.pos += 1;
                    if self.bytes.get(self.pos) == Some(&b'=') {
                        self.pos += 1;
                        Tok::Cmp(CmpOp::Le)
                    } else {
                        Tok::Cmp(CmpOp::Lt)
                    }
                }
                b'>' => {
                    self.pos += 1;
                    if self.bytes.get(self.pos) == Some(&b'=') {
                        self.pos += 1;
                        Tok::Cmp(CmpOp::Ge)
                    } else {
                        Tok::Cmp(CmpOp::Gt)
                    }
                }
                b'"' => {
                    self.pos += 1;
                    let start = self.pos;
                    while let Some(&c) = self.bytes.get(self.pos) {
                        if c == b'"' {
                            break;
                        }
                        self.pos += 1;
                    }
                    if self.bytes.get(self.pos) != Some(&b'"') {
                        let (line, col) = self.line_col(offset);
                        return Err(ParseError::Syntax { line, col, msg: "unterminated string literal".into() });
                    }
                    let s = self.src[start..self.pos].to_string();
                    self.pos += 1;
                    Tok::Str(s)
                }
                b'$' => {
                    self.pos += 1;
                    let name = self.lex_name(offset)?;
                    Tok::Var(name)
                }
                b'0'..=b'9' => {
                    let start = self.pos;
                    while matches!(self.bytes.get(self.pos), Some(b'0'..=b'9')) {
                        self.pos += 1;
                    }
                    if self.bytes.get(self.pos) == Some(&b'.') {
                        self.pos += 1;
                        while matches!(self.bytes.get(self.pos), Some(b'0'..=b'9')) {
                            self.pos += 1;
                        }
                    }
                    let n: f64 = self.src[start..self.pos].parse().map_err(|_| {
                        let (line, col) = self.line_col(offset);
                        ParseError::Syntax { line, col, msg: "bad number".into() }
                    })?;
                    Tok::Num(n)
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let name = self.lex_name(offset)?;
                    Tok::Name(name)
                }
                other => {
                    let (line, col) = self.line_col(offset);
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        msg: format!("unexpected character {:?}", other as char),
                    });
                }
            };
            out.push(Token { tok, offset });
        }
    }

    fn lex_name(&mut self, offset: usize) -> Result<String, ParseError> {
        let start = self.pos;
        match self.bytes.get(self.pos) {
            Some(&c) if c.is_ascii_alphabetic() || c == b'_' => self.pos += 1,
            _ => {
                let (line, col) = self.line_col(offset);
                return Err(ParseError::Syntax { line, col, msg: "expected a name".into() });
            }
        }
        while let Some(&c) = self.bytes.get(self.pos) {
            if c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b'.') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(self.src[start..self.pos].to_string())
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: Vec<Token>,
    i: usize,
    lexer: Lexer<'a>,
    scope: Vec<String>,
    pred_depth: usize,
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer { src: text, bytes: text.as_bytes(), pos: 0 };
    let toks = lexer.tokens()?;
    let mut p = Parser { toks, i: 0, lexer, scope: Vec::new(), pred_depth: 0 };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.i].offset
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.lexer.line_col(self.offset());
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.err("trailing input")
        }
    }

    fn eat_name(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Name(n) if n == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_name(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_name(kw) {
            Ok(())
        } else {
            self.err(format!("expected '{kw}'"))
        }
    }

    fn expect_tok(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Name(n) if n == "for" => self.for_expr(),
            Tok::Name(n) if n == "if" => self.if_expr(),
            _ => self.path_expr(),
        }
    }

    fn for_expr(&mut self) -> Result<Expr, ParseError> {
        self.expect_name("for")?;
        let var = match self.bump() {
            Tok::Var(v) => v,
            _ => return self.err("expected a variable after 'for'"),
        };
        self.expect_name("in")?;
        let input = self.expr()?;
        self.expect_name("return")?;
        self.scope.push(var.clone());
        let body = self.expr()?;
        self.scope.pop();
        Ok(Expr::For { var, input: Box::new(input), body: Box::new(body) })
    }

    fn if_expr(&mut self) -> Result<Expr, ParseError> {
        self.expect_name("if")?;
        self.expect_tok(Tok::LParen, "'('")?;
        let cond = self.bool_expr()?;
        self.expect_tok(Tok::RParen, "')'")?;
        self.expect_name("then")?;
        let then = self.expr()?;
        self.expect_name("else")?;
        self.expect_tok(Tok::LParen, "'(' of the empty sequence")?;
        self.expect_tok(Tok::RParen, "')' of the empty sequence")?;
        Ok(Expr::If { cond: Box::new(cond), then: Box::new(then) })
    }

    fn bool_expr(&mut self) -> Result<BoolExpr, ParseError> {
        let lhs = self.expr()?;
        if let Tok::Cmp(op) = self.peek() {
            let op = *op;
            self.bump();
            let lit = match self.bump() {
                Tok::Str(s) => Literal::Str(s),
                Tok::Num(n) => Literal::Dec(n),
                _ => return self.err("expected a literal after the comparison operator"),
            };
            Ok(BoolExpr::Comp { lhs, op, lit })
        } else {
            Ok(BoolExpr::Exists(lhs))
        }
    }

    fn path_expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Slash => {
                    self.bump();
                    let (axis, test) = self.step()?;
                    e = Expr::Step { input: Box::new(e), axis, test };
                }
                Tok::DoubleSlash => {
                    self.bump();
                    // e//t desugars to e/descendant-or-self::node()/child-ish t
                    e = Expr::Step {
                        input: Box::new(e),
                        axis: Axis::DescendantOrSelf,
                        test: NodeTest::AnyNode,
                    };
                    let (axis, test) = self.step()?;
                    e = Expr::Step { input: Box::new(e), axis, test };
                }
                Tok::LBracket => {
                    self.bump();
                    self.pred_depth += 1;
                    let p = self.bool_expr()?;
                    self.pred_depth -= 1;
                    self.expect_tok(Tok::RBracket, "']'")?;
                    e = Expr::Pred { input: Box::new(e), pred: Box::new(p) };
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Name(n) if n == "doc" && matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::LParen)) => {
                self.bump();
                self.bump();
                let uri = match self.bump() {
                    Tok::Str(s) => s,
                    _ => return self.err("expected a string literal in doc(...)"),
                };
                self.expect_tok(Tok::RParen, "')'")?;
                Ok(Expr::Doc(uri))
            }
            Tok::Var(v) => {
                if !self.scope.contains(&v) {
                    let (line, col) = self.lexer.line_col(self.offset());
                    return Err(ParseError::Unbound { name: v, line, col });
                }
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_tok(Tok::RParen, "')'")?;
                Ok(e)
            }
            _ if self.pred_depth > 0 => {
                // A relative path inside a predicate starts at the context.
                let (axis, test) = self.step()?;
                Ok(Expr::Step { input: Box::new(Expr::ContextItem), axis, test })
            }
            _ => self.err("expected an expression"),
        }
    }

    fn step(&mut self) -> Result<(Axis, NodeTest), ParseError> {
        if matches!(self.peek(), Tok::At) {
            self.bump();
            let test = self.node_test(Axis::Attribute)?;
            return Ok((Axis::Attribute, test));
        }
        // axis::test when a '::' follows the name, otherwise a child-axis test.
        if let Tok::Name(n) = self.peek().clone() {
            if matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::Axis2)) {
                let offset = self.offset();
                self.bump();
                self.bump();
                let axis = Axis::parse(&n).map_err(|_| {
                    let (line, col) = self.lexer.line_col(offset);
                    ParseError::UnsupportedAxis { axis: n.clone(), line, col }
                })?;
                let test = self.node_test(axis)?;
                return Ok((axis, test));
            }
        }
        let test = self.node_test(Axis::Child)?;
        Ok((Axis::Child, test))
    }

    fn node_test(&mut self, axis: Axis) -> Result<NodeTest, ParseError> {
        use crate::infoset::NodeKind;
        match self.bump() {
            Tok::Star => Ok(match axis.principal_kind() {
                NodeKind::Attr => NodeTest::Attribute(None),
                _ => NodeTest::Element(None),
            }),
            Tok::Name(n) => {
                if matches!(self.peek(), Tok::LParen) && (n == "text" || n == "node") {
                    self.bump();
                    self.expect_tok(Tok::RParen, "')'")?;
                    return Ok(if n == "text" { NodeTest::Text } else { NodeTest::AnyNode });
                }
                Ok(match axis.principal_kind() {
                    NodeKind::Attr => NodeTest::Attribute(Some(n)),
                    _ => NodeTest::Element(Some(n)),
                })
            }
            _ => self.err("expected a node test"),
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering (canonical, unabbreviated)
// ---------------------------------------------------------------------------

pub fn render(e: &Expr) -> String {
    let mut s = String::new();
    render_expr(e, &mut s);
    s
}

fn render_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::For { var, input, body } => {
            out.push_str(&format!("for ${var} in "));
            render_expr(input, out);
            out.push_str(" return ");
            render_expr(body, out);
        }
        Expr::Var(v) => {
            let _ = write!(out, "${v}");
        }
        Expr::If { cond, then } => {
            out.push_str("if (");
            render_bool(cond, out);
            out.push_str(") then ");
            render_expr(then, out);
            out.push_str(" else ()");
        }
        Expr::Doc(uri) => {
            let _ = write!(out, "doc(\"{uri}\")");
        }
        Expr::Step { input, axis, test } => {
            let relative = matches!(**input, Expr::ContextItem);
            if !relative {
                let parens = matches!(**input, Expr::For { .. } | Expr::If { .. });
                if parens {
                    out.push('(');
                }
                render_expr(input, out);
                if parens {
                    out.push(')');
                }
                out.push('/');
            }
            let _ = write!(out, "{}::{}", axis.name(), test.render());
        }
        Expr::Pred { input, pred } => {
            let parens = matches!(**input, Expr::For { .. } | Expr::If { .. });
            if parens {
                out.push('(');
            }
            render_expr(input, out);
            if parens {
                out.push(')');
            }
            out.push('[');
            render_bool(pred, out);
            out.push(']');
        }
        Expr::ContextItem => out.push('.'),
    }
}

fn render_bool(b: &BoolExpr, out: &mut String) {
    match b {
        BoolExpr::Exists(e) => render_expr(e, out),
        BoolExpr::Comp { lhs, op, lit } => {
            render_expr(lhs, out);
            let sym = match op {
                CmpOp::Ne => "!=",
                other => other.symbol(),
            };
            let _ = write!(out, " {sym} {lit}");
        }
    }
}

// ---------------------------------------------------------------------------
// Core normalization
// ---------------------------------------------------------------------------

/// Core form: predicates desugared, `fs:ddo` and `fn:boolean` explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Core {
    For { var: String, input: Box<Core>, body: Box<Core> },
    Var(String),
    If { cond: Box<Core>, then: Box<Core> },
    Doc(String),
    Step { input: Box<Core>, axis: Axis, test: NodeTest },
    Ddo(Box<Core>),
    Ebv(Box<Core>),
    Comp { input: Box<Core>, op: CmpOp, lit: Literal },
}

struct Normalizer {
    fresh: usize,
}

impl Normalizer {
    fn fresh_var(&mut self) -> String {
        let v = format!("fs_{}", self.fresh);
        self.fresh += 1;
        v
    }

    fn ddo_wrap(c: Core) -> Core {
        match c {
            Core::Ddo(_) => c,
            other => Core::Ddo(Box::new(other)),
        }
    }

    fn expr(&mut self, e: &Expr, ctx: Option<&str>) -> Core {
        match e {
            Expr::For { var, input, body } => Core::For {
                var: var.clone(),
                input: Box::new(self.expr(input, ctx)),
                body: Box::new(self.expr(body, ctx)),
            },
            Expr::Var(v) => Core::Var(v.clone()),
            Expr::If { cond, then } => Core::If {
                cond: Box::new(Core::Ebv(Box::new(self.bool_expr(cond, ctx)))),
                then: Box::new(self.expr(then, ctx)),
            },
            Expr::Doc(uri) => Core::Doc(uri.clone()),
            Expr::Step { input, axis, test } => Self::ddo_wrap(Core::Step {
                input: Box::new(self.expr(input, ctx)),
                axis: *axis,
                test: test.clone(),
            }),
            Expr::Pred { input, pred } => {
                let input = Self::ddo_wrap(self.expr(input, ctx));
                let f = self.fresh_var();
                let cond = Core::Ebv(Box::new(self.bool_expr(pred, Some(&f))));
                Core::For {
                    var: f.clone(),
                    input: Box::new(input),
                    body: Box::new(Core::If {
                        cond: Box::new(cond),
                        then: Box::new(Core::Var(f)),
                    }),
                }
            }
            Expr::ContextItem => {
                Core::Var(ctx.expect("context item outside a path predicate").to_string())
            }
        }
    }

    fn bool_expr(&mut self, b: &BoolExpr, ctx: Option<&str>) -> Core {
        match b {
            BoolExpr::Exists(e) => self.expr(e, ctx),
            BoolExpr::Comp { lhs, op, lit } => Core::Comp {
                input: Box::new(Self::ddo_wrap(self.expr(lhs, ctx))),
                op: *op,
                lit: lit.clone(),
            },
        }
    }
}

/// Normalizes a parsed expression to core form. Fresh variables are named
/// `$fs_0`, `$fs_1`, ... deterministically per call.
pub fn normalize(e: &Expr) -> Core {
    Normalizer { fresh: 0 }.expr(e, None)
}

/// Re-applies the normalization rules to core; used to state idempotence.
pub fn normalize_core(c: &Core) -> Core {
    match c {
        Core::For { var, input, body } => Core::For {
            var: var.clone(),
            input: Box::new(normalize_core(input)),
            body: Box::new(normalize_core(body)),
        },
        Core::Var(_) | Core::Doc(_) => c.clone(),
        Core::If { cond, then } => Core::If {
            cond: Box::new(normalize_core(cond)),
            then: Box::new(normalize_core(then)),
        },
        Core::Step { input, axis, test } => Normalizer::ddo_wrap(Core::Step {
            input: Box::new(normalize_core(input)),
            axis: *axis,
            test: test.clone(),
        }),
        Core::Ddo(inner) => Normalizer::ddo_wrap(normalize_core(inner)),
        Core::Ebv(inner) => Core::Ebv(Box::new(normalize_core(inner))),
        Core::Comp { input, op, lit } => Core::Comp {
            input: Box::new(Normalizer::ddo_wrap(normalize_core(input))),
            op: *op,
            lit: lit.clone(),
        },
    }
}

/// Canonical s-expression dump. With `rename`, binders become `$v0`, `$v1`,
/// ... in binding order, so dumps compare alpha-equivalent terms.
pub fn core_dump(c: &Core, rename: bool) -> String {
    let mut out = String::new();
    let mut env: Vec<(String, String)> = Vec::new();
    let mut counter = 0usize;
    dump_rec(c, rename, &mut env, &mut counter, &mut out);
    out
}

fn dump_rec(
    c: &Core,
    rename: bool,
    env: &mut Vec<(String, String)>,
    counter: &mut usize,
    out: &mut String,
) {
    match c {
        Core::For { var, input, body } => {
            let display = if rename {
                let d = format!("v{counter}");
                *counter += 1;
                d
            } else {
                var.clone()
            };
            out.push_str("(for $");
            out.push_str(&display);
            out.push(' ');
            dump_rec(input, rename, env, counter, out);
            out.push(' ');
            env.push((var.clone(), display));
            dump_rec(body, rename, env, counter, out);
            env.pop();
            out.push(')');
        }
        Core::Var(v) => {
            let display = env.iter().rev().find(|(n, _)| n == v).map(|(_, d)| d.clone());
            let _ = write!(out, "(var ${})", display.unwrap_or_else(|| v.clone()));
        }
        Core::If { cond, then } => {
            out.push_str("(if ");
            dump_rec(cond, rename, env, counter, out);
            out.push(' ');
            dump_rec(then, rename, env, counter, out);
            out.push(')');
        }
        Core::Doc(uri) => {
            let _ = write!(out, "(doc \"{uri}\")");
        }
        Core::Step { input, axis, test } => {
            let _ = write!(out, "(step {} {} ", axis.name(), test_dump(test));
            dump_rec(input, rename, env, counter, out);
            out.push(')');
        }
        Core::Ddo(e) => {
            out.push_str("(ddo ");
            dump_rec(e, rename, env, counter, out);
            out.push(')');
        }
        Core::Ebv(e) => {
            out.push_str("(ebv ");
            dump_rec(e, rename, env, counter, out);
            out.push(')');
        }
        Core::Comp { input, op, lit } => {
            let _ = write!(out, "(comp {} {} ", op.symbol(), lit);
            dump_rec(input, rename, env, counter, out);
            out.push(')');
        }
    }
}

fn test_dump(t: &NodeTest) -> String {
    match t {
        NodeTest::Element(Some(n)) => format!("element({n})"),
        NodeTest::Element(None) => "element(*)".into(),
        NodeTest::Attribute(Some(n)) => format!("attribute({n})"),
        NodeTest::Attribute(None) => "attribute(*)".into(),
        NodeTest::Text => "text()".into(),
        NodeTest::AnyNode => "node()".into(),
        NodeTest::Document => "document-node()".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn parses_q1_into_a_predicated_step() {
        let e = parse(corpus::Q1).unwrap();
        match &e {
            Expr::Pred { input, pred } => {
                assert!(matches!(**input, Expr::Step { axis: Axis::Descendant, .. }));
                match &**pred {
                    BoolExpr::Exists(Expr::Step { input, axis: Axis::Child, test }) => {
                        assert!(matches!(**input, Expr::ContextItem));
                        assert_eq!(*test, NodeTest::Element(Some("bidder".into())));
                    }
                    other => panic!("unexpected predicate {other:?}"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbound_variable_is_rejected() {
        assert!(matches!(parse("$x"), Err(ParseError::Unbound { .. })));
    }

    #[test]
    fn parses_a_for_loop() {
        let e = parse(r#"for $x in doc("t.xml") return $x"#).unwrap();
        match e {
            Expr::For { var, input, body } => {
                assert_eq!(var, "x");
                assert_eq!(*input, Expr::Doc("t.xml".into()));
                assert_eq!(*body, Expr::Var("x".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sibling_axes_are_unsupported() {
        let err = parse(r#"doc("t.xml")/following-sibling::a"#).unwrap_err();
        assert!(matches!(err, ParseError::UnsupportedAxis { .. }));
    }

    #[test]
    fn double_slash_desugars() {
        let e = parse(r#"doc("t.xml")//a"#).unwrap();
        let c = normalize(&e);
        let dump = core_dump(&c, true);
        assert_eq!(
            dump,
            "(ddo (step child element(a) (ddo (step descendant-or-self node() (doc \"t.xml\")))))"
        );
    }

    #[test]
    fn q1_normalizes_to_the_expected_core() {
        let c = normalize(&parse(corpus::Q1).unwrap());
        let dump = core_dump(&c, true);
        assert_eq!(
            dump,
            "(for $v0 (ddo (step descendant element(open_auction) (doc \"auction.xml\"))) \
             (if (ebv (ddo (step child element(bidder) (var $v0)))) (var $v0)))"
        );
    }

    #[test]
    fn comparison_predicates_normalize_through_ddo_and_ebv() {
        let c = normalize(&parse(r#"doc("site.xml")//item[price > 500]"#).unwrap());
        let dump = core_dump(&c, true);
        assert!(dump.contains("(ebv (comp > 500 (ddo (step child element(price) (var $v0)))))"), "{dump}");
    }

    #[test]
    fn normalize_is_idempotent_on_core() {
        for q in [
            corpus::Q1,
            r#"for $x in doc("site.xml")//open_auction return $x/bidder/time"#,
            r#"doc("site.xml")//item[price > 500]/name"#,
            r#"if (doc("t.xml")/a) then doc("t.xml")/b else ()"#,
        ] {
            let c = normalize(&parse(q).unwrap());
            assert_eq!(normalize_core(&c), c, "{q}");
        }
    }

    #[test]
    fn var_normalizes_to_itself() {
        let c = normalize(&parse(r#"for $x in doc("t.xml") return $x"#).unwrap());
        match c {
            Core::For { body, .. } => assert_eq!(*body, Core::Var("x".into())),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn render_parse_roundtrip() {
        for q in [
            r#"doc("auction.xml")/descendant::open_auction[child::bidder]"#,
            r#"for $x in doc("site.xml")/descendant::item return $x/child::name"#,
            r#"if (doc("t.xml")/child::a) then doc("t.xml")/child::b else ()"#,
            r#"doc("site.xml")/descendant::item[child::price > 500]"#,
        ] {
            let e = parse(q).unwrap();
            let rendered = render(&e);
            let e2 = parse(&rendered).unwrap();
            assert_eq!(e, e2, "{q} vs {rendered}");
        }
    }
}
