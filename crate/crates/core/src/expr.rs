//! A small total language for user-supplied reaction terms.
//!
//! Grammar, in precedence order:
//!
//! ```text
//!   expr   := term { ("+" | "-") term }
//!   term   := factor { "*" factor }
//!   factor := [ "-" ] power
//!   power  := atom [ "^" integer ]
//!   atom   := number | variable | "(" expr ")"
//! ```
//!
//! Variables are `w1`, `w2`, ... (1-based in the surface syntax, 0-based in
//! the tree). There is no division and exponents are literal nonnegative
//! integers, so every expression is a polynomial: evaluation is total on
//! finite inputs and differentiation stays inside the language. Parse errors
//! carry the byte offset of the offending token.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 0-based component index; `w1` parses to `Var(0)`.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    /// Total polynomial evaluation; no sign or domain restrictions.
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => w[*i],
            Expr::Neg(e) => -e.eval(w),
            Expr::Add(a, b) => a.eval(w) + b.eval(w),
            Expr::Sub(a, b) => a.eval(w) - b.eval(w),
            Expr::Mul(a, b) => a.eval(w) * b.eval(w),
            Expr::Pow(e, k) => e.eval(w).powi(*k as i32),
        }
    }

    /// Largest variable index used, if any; callers validate it against
    /// their component count.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Pow(e, _) => e.max_var(),
        }
    }

    /// Syntactic total-degree bound. An upper bound only: cancellations can
    /// lower the true degree, never raise it.
    pub fn degree_bound(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(_) => 1,
            Expr::Neg(e) => e.degree_bound(),
            Expr::Add(a, b) | Expr::Sub(a, b) => a.degree_bound().max(b.degree_bound()),
            Expr::Mul(a, b) => a.degree_bound() + b.degree_bound(),
            Expr::Pow(e, k) => e.degree_bound() * *k as usize,
        }
    }

    /// Exact partial derivative with respect to variable `var` (0-based),
    /// with light constant folding so repeated differentiation stays small.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Pow(e, k) => match *k {
                0 => Expr::Const(0.0),
                1 => e.derivative(var),
                k => mul(
                    mul(Expr::Const(k as f64), Expr::Pow(e.clone(), k - 1)),
                    e.derivative(var),
                ),
            },
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}
fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        Expr::Add(Box::new(a), Box::new(b))
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        Expr::Const(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// Parsing
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Number(f64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        pos,
        msg: msg.into(),
    }
}

fn tokenize(input: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let pos = i;
        match bytes[i] {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                toks.push((pos, Tok::Plus));
                i += 1;
            }
            b'-' => {
                toks.push((pos, Tok::Minus));
                i += 1;
            }
            b'*' => {
                toks.push((pos, Tok::Star));
                i += 1;
            }
            b'^' => {
                toks.push((pos, Tok::Caret));
                i += 1;
            }
            b'(' => {
                toks.push((pos, Tok::LParen));
                i += 1;
            }
            b')' => {
                toks.push((pos, Tok::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i], b'0'..=b'9' | b'.') {
                    i += 1;
                }
                // Exponent part of a float literal, e.g. 1.5e-3.
                if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &input[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| err(start, format!("malformed number '{text}'")))?;
                toks.push((start, Tok::Number(value)));
            }
            b'w' => {
                let start = i;
                i += 1;
                let digits_start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == digits_start {
                    return Err(err(start, "expected a component number after 'w'"));
                }
                let index: usize = input[digits_start..i]
                    .parse()
                    .map_err(|_| err(start, "component number too large"))?;
                if index == 0 {
                    return Err(err(start, "components are numbered from w1"));
                }
                toks.push((start, Tok::Var(index - 1)));
            }
            other => {
                return Err(err(pos, format!("unexpected character '{}'", other as char)));
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    cursor: usize,
    input_len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cursor).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.cursor)
            .map_or(self.input_len, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.cursor).map(|(_, t)| t.clone());
        self.cursor += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.power()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !matches!(self.peek(), Some(Tok::Caret)) {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Number(v)) if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 => {
                Ok(Expr::Pow(Box::new(base), v as u32))
            }
            Some(Tok::Minus) => Err(err(pos, "exponents must be nonnegative integers")),
            _ => Err(err(pos, "expected a nonnegative integer exponent after '^'")),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Number(v)) => Ok(Expr::Const(v)),
            Some(Tok::Var(i)) => Ok(Expr::Var(i)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                let close = self.pos();
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(err(close, "expected ')'")),
                }
            }
            Some(tok) => Err(err(pos, format!("expected a value, found {tok:?}"))),
            None => Err(err(pos, "expected a value, found end of input")),
        }
    }
}

/// Parses one expression; the whole input must be consumed.
pub fn parse(input: &str) -> Result<Expr> {
    let toks = tokenize(input)?;
    let mut parser = Parser {
        toks: &toks,
        cursor: 0,
        input_len: input.len(),
    };
    let expr = parser.expr()?;
    if parser.cursor != toks.len() {
        return Err(err(parser.pos(), "unexpected trailing input"));
    }
    Ok(expr)
}

// ═══════════════════════════════════════════════════════════════════════════
