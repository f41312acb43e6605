//! Link-weight expressions: the individuals evolved by the planner.
//!
//! An expression is a binary tree over `+ - * /` whose leaves are real constants, a static link
//! property (`bw`, `dl`), the link utilization (`util`) or the congestion `threshold`. Trees are
//! immutable; the variation operators build new trees and consume an explicit generator.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Denominators smaller than this in magnitude make a division return 1.0.
pub const PROTECTED_DIV_EPS: f64 = 1e-9;

/// Upper bound on an integer link weight; keeps path sums far from overflow.
pub const MAX_LINK_WEIGHT: u64 = u32::MAX as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.abs() < PROTECTED_DIV_EPS {
                    1.0
                } else {
                    a / b
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StaticProp {
    Bandwidth,
    Delay,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightExpr {
    Binary(BinOp, Box<WeightExpr>, Box<WeightExpr>),
    Const(f64),
    Static(StaticProp),
    Util,
    Threshold,
}

/// Terminal values an expression is evaluated against, for one link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalContext {
    pub bandwidth_mbps: f64,
    pub delay_ms: f64,
    pub utilization: f64,
    pub threshold: f64,
}

impl WeightExpr {
    pub fn binary(op: BinOp, l: WeightExpr, r: WeightExpr) -> Self {
        WeightExpr::Binary(op, Box::new(l), Box::new(r))
    }

    /// `((1.5*threshold)*(1.5*threshold))/(((1.5*threshold)-util)*((1.5*threshold)-util))`:
    /// weights grow sharply as utilization approaches 1.5x the threshold.
    pub fn headroom_square() -> Self {
        use BinOp::*;
        let scaled = || WeightExpr::binary(Mul, WeightExpr::Const(1.5), WeightExpr::Threshold);
        let gap = || WeightExpr::binary(Sub, scaled(), WeightExpr::Util);
        WeightExpr::binary(
            Div,
            WeightExpr::binary(Mul, scaled(), scaled()),
            WeightExpr::binary(Mul, gap(), gap()),
        )
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, WeightExpr::Binary(..))
    }

    /// Total, deterministic evaluation with protected division.
    pub fn evaluate(&self, ctx: &EvalContext) -> f64 {
        match self {
            WeightExpr::Binary(op, l, r) => op.apply(l.evaluate(ctx), r.evaluate(ctx)),
            WeightExpr::Const(v) => *v,
            WeightExpr::Static(StaticProp::Bandwidth) => ctx.bandwidth_mbps,
            WeightExpr::Static(StaticProp::Delay) => ctx.delay_ms,
            WeightExpr::Util => ctx.utilization,
            WeightExpr::Threshold => ctx.threshold,
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            WeightExpr::Binary(_, l, r) => 1 + l.size() + r.size(),
            _ => 1,
        }
    }

    /// Depth counting a lone terminal as 1.
    pub fn depth(&self) -> usize {
        match self {
            WeightExpr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
            _ => 1,
        }
    }

    /// Subtree rooted at preorder index `index`.
    pub fn subtree(&self, index: usize) -> Option<&WeightExpr> {
        fn walk<'a>(e: &'a WeightExpr, target: usize, next: &mut usize) -> Option<&'a WeightExpr> {
            if *next == target {
                return Some(e);
            }
            *next += 1;
            if let WeightExpr::Binary(_, l, r) = e {
                walk(l, target, next).or_else(|| walk(r, target, next))
            } else {
                None
            }
        }
        walk(self, index, &mut 0)
    }

    /// Depth (1-based) of the node at preorder index `index`.
    pub fn node_depth(&self, index: usize) -> Option<usize> {
        fn walk(e: &WeightExpr, target: usize, next: &mut usize, depth: usize) -> Option<usize> {
            if *next == target {
                return Some(depth);
            }
            *next += 1;
            if let WeightExpr::Binary(_, l, r) = e {
                walk(l, target, next, depth + 1).or_else(|| walk(r, target, next, depth + 1))
            } else {
                None
            }
        }
        walk(self, index, &mut 0, 1)
    }

    /// Copy of `self` with the subtree at preorder `index` replaced by `with`.
    pub fn replace_subtree(&self, index: usize, with: WeightExpr) -> WeightExpr {
        fn walk(e: &WeightExpr, target: usize, next: &mut usize, with: &mut Option<WeightExpr>) -> WeightExpr {
            if *next == target {
                *next += e.size();
                return with.take().expect("replacement used once");
            }
            *next += 1;
            match e {
                WeightExpr::Binary(op, l, r) => {
                    let l = walk(l, target, next, with);
                    let r = walk(r, target, next, with);
                    WeightExpr::binary(*op, l, r)
                }
                leaf => leaf.clone(),
            }
        }
        let mut with = Some(with);
        walk(self, index, &mut 0, &mut with)
    }

    /// Preorder node labels; used to compare trees up to rearrangement.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.size());
        fn walk(e: &WeightExpr, out: &mut Vec<String>) {
            match e {
                WeightExpr::Binary(op, l, r) => {
                    out.push(op.symbol().to_string());
                    walk(l, out);
                    walk(r, out);
                }
                leaf => out.push(leaf.to_string()),
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Integer link weight: the floor of the evaluated expression, at least 1.
///
/// Values within a relative 1e-9 of an integer are taken to be that integer first, so that
/// rounding noise in the arithmetic (e.g. 3.9999999999999982 for an exact 4) does not lose a unit.
/// Non-finite results map to 1; huge results saturate at [`MAX_LINK_WEIGHT`].
pub fn to_link_weight(expr: &WeightExpr, ctx: &EvalContext) -> u64 {
    weight_from_value(expr.evaluate(ctx))
}

pub fn weight_from_value(v: f64) -> u64 {
    if !v.is_finite() {
        return 1;
    }
    let nearest = v.round();
    let floored = if (v - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        v.floor()
    };
    if floored < 1.0 {
        1
    } else if floored >= MAX_LINK_WEIGHT as f64 {
        MAX_LINK_WEIGHT
    } else {
        floored as u64
    }
}

/// Depth bound and constant range used when generating and varying trees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub max_depth: usize,
    pub const_min: f64,
    pub const_max: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            max_depth: 5,
            const_min: 0.0,
            const_max: 100.0,
        }
    }
}

const TERMINAL_KINDS: usize = 5;

impl Grammar {
    pub fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightExpr {
        match rng.gen_range(0..TERMINAL_KINDS) {
            0 => WeightExpr::Const(rng.gen_range(self.const_min..=self.const_max)),
            1 => WeightExpr::Static(StaticProp::Bandwidth),
            2 => WeightExpr::Static(StaticProp::Delay),
            3 => WeightExpr::Util,
            _ => WeightExpr::Threshold,
        }
    }

    /// Grow-method tree of depth at most `max_depth`: every node below the depth bound is drawn
    /// uniformly from operators and terminal kinds alike; at the bound only terminals are drawn.
    pub fn grow<R: Rng + ?Sized>(&self, rng: &mut R, max_depth: usize) -> WeightExpr {
        let max_depth = max_depth.max(1);
        if max_depth == 1 {
            return self.random_terminal(rng);
        }
        let pick = rng.gen_range(0..BinOp::ALL.len() + TERMINAL_KINDS);
        if pick < BinOp::ALL.len() {
            let l = self.grow(rng, max_depth - 1);
            let r = self.grow(rng, max_depth - 1);
            WeightExpr::binary(BinOp::ALL[pick], l, r)
        } else {
            self.random_terminal(rng)
        }
    }

    /// Replaces every operator sitting at the depth bound with a random terminal.
    pub fn repair_depth<R: Rng + ?Sized>(&self, rng: &mut R, expr: WeightExpr) -> WeightExpr {
        fn walk<R: Rng + ?Sized>(g: &Grammar, rng: &mut R, e: WeightExpr, depth: usize) -> WeightExpr {
            match e {
                WeightExpr::Binary(..) if depth >= g.max_depth => g.random_terminal(rng),
                WeightExpr::Binary(op, l, r) => {
                    let l = walk(g, rng, *l, depth + 1);
                    let r = walk(g, rng, *r, depth + 1);
                    WeightExpr::binary(op, l, r)
                }
                leaf => leaf,
            }
        }
        walk(self, rng, expr, 1)
    }

    /// Swaps one uniformly chosen subtree of `a` with one of `b`.
    pub fn crossover<R: Rng + ?Sized>(&self, rng: &mut R, a: &WeightExpr, b: &WeightExpr) -> (WeightExpr, WeightExpr) {
        let i = rng.gen_range(0..a.size());
        let j = rng.gen_range(0..b.size());
        let from_a = a.subtree(i).expect("index in range").clone();
        let from_b = b.subtree(j).expect("index in range").clone();
        let c1 = a.replace_subtree(i, from_b);
        let c2 = b.replace_subtree(j, from_a);
        (self.repair_depth(rng, c1), self.repair_depth(rng, c2))
    }

    /// Replaces one uniformly chosen subtree with a fresh grow tree that fits the depth bound.
    pub fn mutate<R: Rng + ?Sized>(&self, rng: &mut R, expr: &WeightExpr) -> WeightExpr {
        let i = rng.gen_range(0..expr.size());
        let depth = expr.node_depth(i).expect("index in range");
        let room = self.max_depth.saturating_sub(depth) + 1;
        let fresh = self.grow(rng, room);
        self.repair_depth(rng, expr.replace_subtree(i, fresh))
    }
}

/// Grow-method tree with the default constant range.
pub fn grow_random<R: Rng + ?Sized>(rng: &mut R, max_depth: usize) -> WeightExpr {
    Grammar {
        max_depth,
        ..Grammar::default()
    }
    .grow(rng, max_depth)
}

pub fn one_point_crossover<R: Rng + ?Sized>(
    rng: &mut R,
    a: &WeightExpr,
    b: &WeightExpr,
    max_depth: usize,
) -> (WeightExpr, WeightExpr) {
    Grammar {
        max_depth,
        ..Grammar::default()
    }
    .crossover(rng, a, b)
}

pub fn one_point_mutation<R: Rng + ?Sized>(rng: &mut R, expr: &WeightExpr, max_depth: usize) -> WeightExpr {
    Grammar {
        max_depth,
        ..Grammar::default()
    }
    .mutate(rng, expr)
}

impl fmt::Display for WeightExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightExpr::Binary(op, l, r) => write!(f, "({l}{}{r})", op.symbol()),
            WeightExpr::Const(v) => write!(f, "{v}"),
            WeightExpr::Static(StaticProp::Bandwidth) => f.write_str("bw"),
            WeightExpr::Static(StaticProp::Delay) => f.write_str("dl"),
            WeightExpr::Util => f.write_str("util"),
            WeightExpr::Threshold => f.write_str("threshold"),
        }
    }
}

pub fn format_expr(expr: &WeightExpr) -> String {
    expr.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

pub fn parse_expr(text: &str) -> Result<WeightExpr, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

impl FromStr for WeightExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_expr(s)
    }
}

impl Serialize for WeightExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WeightExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

/// Recursive-descent parser: `+ -` bind looser than `* /`, both left-associative.
struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ParseError {
        ParseError {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_token(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek()
    }

    fn expr(&mut self) -> Result<WeightExpr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_token() {
            self.pos += 1;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = WeightExpr::binary(op, lhs, self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<WeightExpr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek_token() {
            self.pos += 1;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = WeightExpr::binary(op, lhs, self.factor()?);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<WeightExpr, ParseError> {
        match self.peek_token() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek_token() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' || c == '-' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                match &self.src[start..self.pos] {
                    "bw" => Ok(WeightExpr::Static(StaticProp::Bandwidth)),
                    "dl" => Ok(WeightExpr::Static(StaticProp::Delay)),
                    "util" => Ok(WeightExpr::Util),
                    "threshold" => Ok(WeightExpr::Threshold),
                    other => Err(ParseError {
                        pos: start,
                        msg: format!("unknown identifier '{other}'"),
                    }),
                }
            }
            Some(_) => Err(self.error("expected a number, identifier or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<WeightExpr, ParseError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let c = bytes[self.pos];
            let exp_sign = (c == b'+' || c == b'-') && self.pos > start && matches!(bytes[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(WeightExpr::Const(v)),
            _ => Err(ParseError {
                pos: start,
                msg: format!("invalid number '{text}'"),
            }),
        }
    }
}
