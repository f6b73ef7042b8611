//! The formula language of v6 documents and document expansion.
//!
//! Arrays and tables are indexed from 1; tables are indexed `[row, col]`.
//! Trigonometric functions take degrees.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::geom::{cos_deg, sin_deg};
use crate::model::{Definition, GenericDocument, Param};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("`{0}` is used before its definition")]
    ForwardReference(String),
    #[error("`{name}` is not {expected}")]
    WrongKind { name: String, expected: &'static str },
    #[error("index {index} out of bounds for `{name}` (valid 1..={len})")]
    IndexOutOfBounds { name: String, index: i64, len: usize },
    #[error("index {value} into `{name}` is not an integer")]
    NonIntegerIndex { name: String, value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op} is undefined for {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("`{0}` is defined twice")]
    Redefinition(String),
    #[error("table `{0}` has rows of different lengths")]
    RaggedTable(String),
    #[error("parameter `{0}` has not been filled")]
    Unfilled(String),
    #[error("in `{element}`: {source}")]
    InElement {
        element: String,
        #[source]
        source: Box<ExprError>,
    },
}

impl ExprError {
    fn within(self, element: &str) -> ExprError {
        ExprError::InElement {
            element: element.to_string(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Tan, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Func::Sin => sin_deg(x),
            Func::Cos => cos_deg(x),
            Func::Tan => {
                let c = cos_deg(x);
                if c == 0.0 {
                    return Err(ExprError::Domain { op: "tan", arg: x });
                }
                sin_deg(x) / c
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(ExprError::Domain { op: "sqrt", arg: x });
                }
                x.sqrt()
            }
            Func::Abs => x.abs(),
        })
    }
}

/// Formula syntax tree. Literals are non-negative; a leading minus is `Neg`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ident(String),
    Index(String, Box<Expr>),
    Index2(String, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }

    /// Names referenced by the expression, scalars and indexed alike.
    pub fn names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Ident(n) => out.push(n),
            Expr::Index(n, i) => {
                out.push(n);
                i.collect_names(out);
            }
            Expr::Index2(n, i, j) => {
                out.push(n);
                i.collect_names(out);
                j.collect_names(out);
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_names(out),
            Expr::Binary(_, l, r) => {
                l.collect_names(out);
                r.collect_names(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Ident(n) => f.write_str(n),
            Expr::Index(n, i) => write!(f, "{n}[{i}]"),
            Expr::Index2(n, i, j) => write!(f, "{n}[{i},{j}]"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                wrap(f, l, l.precedence() < p)?;
                write!(f, "{}", op.symbol())?;
                wrap(f, r, r.precedence() <= p)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parser

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = ExprParser { s: text.as_bytes(), pos: 0 };
    p.skip_ws();
    if p.pos == p.s.len() {
        return Err(p.error("empty expression"));
    }
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct ExprParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(e),
            };
            self.pos += 1;
            e = Expr::binary(op, e, self.product()?);
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(e),
            };
            self.pos += 1;
            e = Expr::binary(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self
                    .s
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_' || *c == b'.')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii").to_string();
                match self.peek() {
                    Some(b'[') => {
                        self.pos += 1;
                        let i = self.sum()?;
                        let e = if self.eat(b',') {
                            let j = self.sum()?;
                            Expr::Index2(name, Box::new(i), Box::new(j))
                        } else {
                            Expr::Index(name, Box::new(i))
                        };
                        self.expect(b']')?;
                        Ok(e)
                    }
                    Some(b'(') => {
                        let func = Func::from_name(&name).ok_or(ExprError::Syntax {
                            offset: start,
                            message: format!("unknown function `{name}`"),
                        })?;
                        self.pos += 1;
                        let a = self.sum()?;
                        self.expect(b')')?;
                        Ok(Expr::Call(func, Box::new(a)))
                    }
                    _ => Ok(Expr::Ident(name)),
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.s.get(p.pos).is_some_and(u8::is_ascii_digit) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.s.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.s.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Num)
            .ok_or(ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Named values visible to formulas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Environment {
    pub scalars: BTreeMap<String, f64>,
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub tables: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Environment {
    fn defined(&self, name: &str) -> bool {
        self.scalars.contains_key(name) || self.arrays.contains_key(name) || self.tables.contains_key(name)
    }

    fn claim(&self, name: &str) -> Result<(), ExprError> {
        if self.defined(name) {
            Err(ExprError::Redefinition(name.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn define_scalar(&mut self, name: &str, v: f64) -> Result<(), ExprError> {
        self.claim(name)?;
        self.scalars.insert(name.to_string(), v);
        Ok(())
    }

    pub fn define_array(&mut self, name: &str, v: Vec<f64>) -> Result<(), ExprError> {
        self.claim(name)?;
        self.arrays.insert(name.to_string(), v);
        Ok(())
    }

    pub fn define_table(&mut self, name: &str, rows: Vec<Vec<f64>>) -> Result<(), ExprError> {
        self.claim(name)?;
        if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(ExprError::RaggedTable(name.to_string()));
        }
        self.tables.insert(name.to_string(), rows);
        Ok(())
    }

    pub fn eval(&self, e: &Expr) -> Result<f64, ExprError> {
        match e {
            Expr::Num(v) => Ok(*v),
            Expr::Ident(n) => self.scalars.get(n).copied().ok_or_else(|| self.missing(n, "a scalar")),
            Expr::Index(n, i) => {
                let a = self.arrays.get(n).ok_or_else(|| self.missing(n, "an array"))?;
                let i = self.index(n, i, a.len())?;
                Ok(a[i])
            }
            Expr::Index2(n, i, j) => {
                let t = self.tables.get(n).ok_or_else(|| self.missing(n, "a table"))?;
                let i = self.index(n, i, t.len())?;
                let row = &t[i];
                let j = self.index(n, j, row.len())?;
                Ok(row[j])
            }
            Expr::Neg(x) => Ok(-self.eval(x)?),
            Expr::Call(f, x) => f.apply(self.eval(x)?),
            Expr::Binary(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DivisionByZero);
                        }
                        a / b
                    }
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExprError::Domain {
                        op: "arithmetic",
                        arg: v,
                    })
                }
            }
        }
    }

    pub fn eval_str(&self, text: &str) -> Result<f64, ExprError> {
        self.eval(&parse_expr(text)?)
    }

    fn missing(&self, name: &str, expected: &'static str) -> ExprError {
        if self.defined(name) {
            ExprError::WrongKind {
                name: name.to_string(),
                expected,
            }
        } else {
            ExprError::UnknownName(name.to_string())
        }
    }

    /// 1-based index to 0-based offset.
    fn index(&self, name: &str, e: &Expr, len: usize) -> Result<usize, ExprError> {
        let v = self.eval(e)?;
        let r = v.round();
        if (v - r).abs() > 1e-9 {
            return Err(ExprError::NonIntegerIndex {
                name: name.to_string(),
                value: v,
            });
        }
        if r < 1.0 || r > len as f64 {
            return Err(ExprError::IndexOutOfBounds {
                name: name.to_string(),
                index: r as i64,
                len,
            });
        }
        Ok(r as usize - 1)
    }
}

// ---------------------------------------------------------------------------
// Document expansion

/// Expand every formula in a document, returning the numeric document and
/// the environment built from its definitions.
pub fn expand_with_env(doc: &GenericDocument) -> Result<(GenericDocument, Environment), ExprError> {
    if let Some(r) = doc.unresolved_params().first() {
        return Err(ExprError::Unfilled(r.name.clone()));
    }
    let all: HashSet<&str> = doc.definitions.iter().map(Definition::name).collect();
    let mut env = Environment::default();
    let mut out = doc.clone();
    for def in &mut out.definitions {
        let name = def.name().to_string();
        let eval = |env: &Environment, p: &Param| -> Result<f64, ExprError> {
            match p {
                Param::Num(v) => Ok(*v),
                Param::Expr(t) => env.eval_str(t).map_err(|e| match e {
                    ExprError::UnknownName(n) if all.contains(n.as_str()) => ExprError::ForwardReference(n),
                    other => other,
                }),
            }
        };
        let result = match def {
            Definition::Var { value, .. } => eval(&env, value).and_then(|v| {
                *value = Param::Num(v);
                env.define_scalar(&name, v)
            }),
            Definition::Array { values, .. } => values
                .iter()
                .map(|p| eval(&env, p))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|vs| {
                    *values = vs.iter().copied().map(Param::Num).collect();
                    env.define_array(&name, vs)
                }),
            Definition::Table { rows, .. } => rows
                .iter()
                .map(|r| r.iter().map(|p| eval(&env, p)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
                .and_then(|vs| {
                    *rows = vs.iter().map(|r| r.iter().copied().map(Param::Num).collect()).collect();
                    env.define_table(&name, vs)
                }),
            Definition::Connected(_) => unreachable!("checked above"),
        };
        result.map_err(|e| e.within(&name))?;
    }
    for (owner, p) in out.params_mut() {
        if let Param::Expr(t) = p {
            let v = env.eval_str(t).map_err(|e| e.within(&owner))?;
            *p = Param::Num(v);
        }
    }
    Ok((out, env))
}

pub fn expand_document(doc: &GenericDocument) -> Result<GenericDocument, ExprError> {
    expand_with_env(doc).map(|(d, _)| d)
}
