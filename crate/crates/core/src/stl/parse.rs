//! Concrete syntax for formulas.
//!
//! ```text
//! formula := or_expr
//! or_expr := and_expr ("||" and_expr)*
//! and_expr := until_expr ("&&" until_expr)*
//! until_expr := unary ("U" "[" int "," int "]" until_expr)?
//! unary := "!" unary
//!        | ("G" | "F") "[" int "," int "]" "(" formula ")"
//!        | "(" formula ")"
//!        | atom
//! atom := "true"
//!       | "in_box" "(" signal "," region ")"
//!       | "near" "(" signal "," signal "," number ")"
//!       | linexpr ">=" number
//! linexpr := term (("+" | "-") term)*
//! term := number | [number "*"] signal ["[" int "]"]
//! ```
//!
//! `in_box` expands to one pair of affine predicates per coordinate of the
//! named axis-aligned box; `near(s1, s2, d)` expands to the conjunction
//! `|s1[k] - s2[k]| <= d` over coordinates. `G`, `F`, `U` and `true` are
//! reserved words.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::ast::{AgentId, Predicate, SignalLayout, StlFormula};
use super::StlError;

/// Axis-aligned box usable by `in_box`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub name: String,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Int(u64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Star,
    Plus,
    Minus,
    Ge,
    AndAnd,
    OrOr,
    Bang,
}

#[derive(Debug, Clone)]
struct Lexeme {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexeme>, StlError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (l, co) = (line, col);
        let mut push = |tok| out.push(Lexeme { tok, line: l, col: co });
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '[' => {
                chars.next();
                col += 1;
                push(Tok::LBracket);
            }
            ']' => {
                chars.next();
                col += 1;
                push(Tok::RBracket);
            }
            '(' => {
                chars.next();
                col += 1;
                push(Tok::LParen);
            }
            ')' => {
                chars.next();
                col += 1;
                push(Tok::RParen);
            }
            ',' => {
                chars.next();
                col += 1;
                push(Tok::Comma);
            }
            '*' => {
                chars.next();
                col += 1;
                push(Tok::Star);
            }
            '+' => {
                chars.next();
                col += 1;
                push(Tok::Plus);
            }
            '-' => {
                chars.next();
                col += 1;
                push(Tok::Minus);
            }
            '!' => {
                chars.next();
                col += 1;
                push(Tok::Bang);
            }
            '>' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    push(Tok::Ge);
                } else {
                    return Err(StlError::Syntax {
                        line,
                        col: co,
                        msg: "expected `>=`".into(),
                    });
                }
            }
            '&' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'&') {
                    chars.next();
                    col += 1;
                    push(Tok::AndAnd);
                } else {
                    return Err(StlError::Syntax {
                        line,
                        col: co,
                        msg: "expected `&&`".into(),
                    });
                }
            }
            '|' => {
                chars.next();
                col += 1;
                if chars.peek() == Some(&'|') {
                    chars.next();
                    col += 1;
                    push(Tok::OrOr);
                } else {
                    return Err(StlError::Syntax {
                        line,
                        col: co,
                        msg: "expected `||`".into(),
                    });
                }
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                let mut is_float = false;
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else if d == '.' && !is_float {
                        is_float = true;
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                if is_float {
                    let v: f64 = s.parse().map_err(|_| StlError::Syntax {
                        line,
                        col: co,
                        msg: format!("bad number `{s}`"),
                    })?;
                    push(Tok::Number(v));
                } else {
                    let v: u64 = s.parse().map_err(|_| StlError::Syntax {
                        line,
                        col: co,
                        msg: format!("bad integer `{s}`"),
                    })?;
                    push(Tok::Int(v));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push(Tok::Ident(s));
            }
            other => {
                return Err(StlError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Lexeme>,
    pos: usize,
    layout: &'a SignalLayout,
    clique: &'a [AgentId],
    regions: &'a [Region],
    end_line: usize,
    end_col: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|l| (l.line, l.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err(&self, msg: impl Into<String>) -> StlError {
        let (line, col) = self.here();
        StlError::Syntax { line, col, msg: msg.into() }
    }

    fn next(&mut self) -> Option<Lexeme> {
        let l = self.toks.get(self.pos).cloned();
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), StlError> {
        match self.peek() {
            Some(t) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn interval(&mut self) -> Result<(usize, usize), StlError> {
        self.expect(Tok::LBracket, "`[`")?;
        let a = self.interval_bound()?;
        self.expect(Tok::Comma, "`,` in interval")?;
        let b = self.interval_bound()?;
        self.expect(Tok::RBracket, "`]` closing interval")?;
        if a > b {
            return Err(StlError::InvertedInterval { a: a as usize, b: b as usize });
        }
        Ok((a as usize, b as usize))
    }

    fn interval_bound(&mut self) -> Result<u64, StlError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::Minus) => {
                let (line, col) = self.here();
                Err(StlError::NegativeInterval { line, col })
            }
            _ => Err(self.err("expected integer interval bound")),
        }
    }

    fn formula(&mut self) -> Result<StlFormula, StlError> {
        let first = self.and_expr()?;
        let mut parts = vec![first];
        while self.peek() == Some(&Tok::OrOr) {
            self.pos += 1;
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { StlFormula::Or(parts) })
    }

    fn and_expr(&mut self) -> Result<StlFormula, StlError> {
        let first = self.until_expr()?;
        let mut parts = vec![first];
        while self.peek() == Some(&Tok::AndAnd) {
            self.pos += 1;
            parts.push(self.until_expr()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { StlFormula::And(parts) })
    }

    fn until_expr(&mut self) -> Result<StlFormula, StlError> {
        let lhs = self.unary()?;
        if let Some(Tok::Ident(id)) = self.peek() {
            if id == "U" {
                self.pos += 1;
                let (a, b) = self.interval()?;
                let rhs = self.until_expr()?;
                return Ok(StlFormula::until(a, b, lhs, rhs));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<StlFormula, StlError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(StlFormula::not(self.unary()?))
            }
            Some(Tok::Ident(id)) if (id == "G" || id == "F") && self.peek2() == Some(&Tok::LBracket) => {
                let always = id == "G";
                self.pos += 1;
                let (a, b) = self.interval()?;
                self.expect(Tok::LParen, "`(` after temporal operator")?;
                let child = self.formula()?;
                self.expect(Tok::RParen, "`)` closing temporal operator")?;
                Ok(if always {
                    StlFormula::always(a, b, child)
                } else {
                    StlFormula::eventually(a, b, child)
                })
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(id)) if id == "true" => {
                self.pos += 1;
                Ok(StlFormula::True)
            }
            Some(Tok::Ident(id)) if id == "in_box" => self.in_box(),
            Some(Tok::Ident(id)) if id == "near" => self.near(),
            Some(_) => self.linear_atom(),
            None => Err(self.err("unexpected end of formula")),
        }
    }

    fn signal(&mut self) -> Result<AgentId, StlError> {
        match self.next() {
            Some(Lexeme { tok: Tok::Ident(name), .. }) => {
                let agent = self
                    .layout
                    .index_of(&name)
                    .ok_or(StlError::UnknownSignal(name.clone()))?;
                if !self.clique.contains(&agent) {
                    return Err(StlError::SignalOutsideBinding { signal: name });
                }
                Ok(agent)
            }
            _ => Err(self.err("expected signal name")),
        }
    }

    fn number(&mut self) -> Result<f64, StlError> {
        let neg = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let v = match self.next() {
            Some(Lexeme { tok: Tok::Number(v), .. }) => v,
            Some(Lexeme { tok: Tok::Int(v), .. }) => v as f64,
            _ => return Err(self.err("expected number")),
        };
        Ok(if neg { -v } else { v })
    }

    fn in_box(&mut self) -> Result<StlFormula, StlError> {
        self.pos += 1; // in_box
        self.expect(Tok::LParen, "`(` after in_box")?;
        let agent = self.signal()?;
        self.expect(Tok::Comma, "`,` in in_box")?;
        let region_name = match self.next() {
            Some(Lexeme { tok: Tok::Ident(n), .. }) => n,
            _ => return Err(self.err("expected region name")),
        };
        self.expect(Tok::RParen, "`)` closing in_box")?;
        let region = self
            .regions
            .iter()
            .find(|r| r.name == region_name)
            .ok_or(StlError::UnknownRegion(region_name))?;
        let dim = self.layout.dim(agent);
        if region.min.len() != dim || region.max.len() != dim {
            return Err(StlError::DimensionMismatch(format!(
                "region `{}` has dimension {}, signal `{}` has {}",
                region.name,
                region.min.len(),
                self.layout.name(agent),
                dim
            )));
        }
        let mut parts = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            // x[k] - min[k] >= 0 and max[k] - x[k] >= 0
            let mut lo = DVector::zeros(dim);
            lo[k] = 1.0;
            parts.push(StlFormula::Pred(Predicate::new(vec![agent], lo, -region.min[k])?));
            let mut hi = DVector::zeros(dim);
            hi[k] = -1.0;
            parts.push(StlFormula::Pred(Predicate::new(vec![agent], hi, region.max[k])?));
        }
        Ok(StlFormula::And(parts))
    }

    fn near(&mut self) -> Result<StlFormula, StlError> {
        self.pos += 1; // near
        self.expect(Tok::LParen, "`(` after near")?;
        let s1 = self.signal()?;
        self.expect(Tok::Comma, "`,` in near")?;
        let s2 = self.signal()?;
        self.expect(Tok::Comma, "`,` in near")?;
        let d = self.number()?;
        self.expect(Tok::RParen, "`)` closing near")?;
        if s1 == s2 {
            return Err(self.err("near() needs two distinct signals"));
        }
        let (da, db) = (self.layout.dim(s1), self.layout.dim(s2));
        if da != db {
            return Err(StlError::DimensionMismatch(format!(
                "near() signals have dimensions {da} and {db}"
            )));
        }
        // binding must be ascending; remember which slot holds s1
        let (first, second, s1_first) = if s1 < s2 { (s1, s2, true) } else { (s2, s1, false) };
        let mut parts = Vec::with_capacity(2 * da);
        for k in 0..da {
            for sign in [1.0, -1.0] {
                // d - sign*(s1[k] - s2[k]) >= 0
                let mut coeffs = DVector::zeros(2 * da);
                let (c1, c2) = (-sign, sign);
                if s1_first {
                    coeffs[k] = c1;
                    coeffs[da + k] = c2;
                } else {
                    coeffs[k] = c2;
                    coeffs[da + k] = c1;
                }
                parts.push(StlFormula::Pred(Predicate::new(
                    vec![first, second],
                    coeffs,
                    d,
                )?));
            }
        }
        Ok(StlFormula::And(parts))
    }

    /// `linexpr >= number` folded into a single affine predicate.
    fn linear_atom(&mut self) -> Result<StlFormula, StlError> {
        let mut coeff_map: BTreeMap<(AgentId, usize), f64> = BTreeMap::new();
        let mut constant = 0.0;
        let mut sign = 1.0;
        loop {
            match self.peek() {
                Some(Tok::Minus) => {
                    self.pos += 1;
                    sign = -sign;
                    continue;
                }
                Some(Tok::Plus) => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            // term: number [* sigref] | sigref
            let mut value = sign;
            let mut has_number = false;
            if let Some(Tok::Number(_) | Tok::Int(_)) = self.peek() {
                let v = match self.next().unwrap().tok {
                    Tok::Number(v) => v,
                    Tok::Int(v) => v as f64,
                    _ => unreachable!(),
                };
                value *= v;
                has_number = true;
                if self.peek() == Some(&Tok::Star) {
                    self.pos += 1;
                } else {
                    constant += value;
                    sign = 1.0;
                    if !self.term_continues() {
                        break;
                    }
                    self.consume_additive(&mut sign)?;
                    continue;
                }
            }
            match self.peek() {
                Some(Tok::Ident(_)) => {
                    let agent = self.signal()?;
                    let dim = self.layout.dim(agent);
                    let idx = if self.peek() == Some(&Tok::LBracket) {
                        self.pos += 1;
                        let i = match self.next() {
                            Some(Lexeme { tok: Tok::Int(i), .. }) => i as usize,
                            _ => return Err(self.err("expected coordinate index")),
                        };
                        self.expect(Tok::RBracket, "`]` after coordinate index")?;
                        i
                    } else if dim == 1 {
                        0
                    } else {
                        return Err(self.err(format!(
                            "signal `{}` has dimension {dim}; use an explicit index",
                            self.layout.name(agent)
                        )));
                    };
                    if idx >= dim {
                        return Err(self.err(format!(
                            "coordinate index {idx} out of range for dimension {dim}"
                        )));
                    }
                    *coeff_map.entry((agent, idx)).or_insert(0.0) += value;
                }
                _ if has_number => unreachable!(),
                _ => return Err(self.err("expected a signal or number in linear expression")),
            }
            sign = 1.0;
            if !self.term_continues() {
                break;
            }
            self.consume_additive(&mut sign)?;
        }
        self.expect(Tok::Ge, "`>=` in predicate")?;
        let rhs = self.number()?;
        let offset = constant - rhs;
        if coeff_map.is_empty() {
            return Err(self.err("predicate has no signal term"));
        }
        let binding: Vec<AgentId> = {
            let mut b: Vec<AgentId> = coeff_map.keys().map(|&(a, _)| a).collect();
            b.sort_unstable();
            b.dedup();
            b
        };
        let total: usize = binding.iter().map(|&a| self.layout.dim(a)).sum();
        let mut coeffs = DVector::zeros(total);
        let mut off = 0;
        for &agent in &binding {
            for k in 0..self.layout.dim(agent) {
                if let Some(&c) = coeff_map.get(&(agent, k)) {
                    coeffs[off + k] = c;
                }
            }
            off += self.layout.dim(agent);
        }
        Ok(StlFormula::Pred(Predicate::new(binding, coeffs, offset)?))
    }

    fn term_continues(&self) -> bool {
        matches!(self.peek(), Some(Tok::Plus) | Some(Tok::Minus))
    }

    fn consume_additive(&mut self, sign: &mut f64) -> Result<(), StlError> {
        match self.peek() {
            Some(Tok::Plus) => {
                self.pos += 1;
                *sign = 1.0;
                Ok(())
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                *sign = -1.0;
                Ok(())
            }
            _ => Err(self.err("expected `+` or `-`")),
        }
    }
}

/// Parses a formula bound to the given agent group.
///
/// Signals mentioned by predicates must belong to `clique`; the returned AST
/// has its horizon available via [`StlFormula::horizon`].
pub fn parse_formula(
    text: &str,
    layout: &SignalLayout,
    clique: &[AgentId],
    regions: &[Region],
) -> Result<StlFormula, StlError> {
    let toks = lex(text)?;
    let (end_line, end_col) = toks
        .last()
        .map(|l| (l.line, l.col + 1))
        .unwrap_or((1, 1));
    let mut p = Parser { toks, pos: 0, layout, clique, regions, end_line, end_col };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after formula"));
    }
    f.validate()?;
    Ok(f)
}
