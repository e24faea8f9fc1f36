//! Closed-form coefficient expressions: parsing, pretty-printing and
//! jet evaluation.
//!
//! The grammar is conventional infix with precedence
//! `^  >  unary -  >  * /  >  + -`, left association and parentheses.
//! Exponents are integer literals, which keeps powers single-valued on the
//! whole chart. Supported functions: `sin`, `cos`, `exp`, `sqrt`.

use std::fmt;
use std::sync::Arc;

use crate::jet::{Jet, MAX_ORDER};

/// Ordered list of chart symbols (1 to 3 distinct names).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart(Arc<Vec<String>>);

impl Chart {
    pub fn new<S: AsRef<str>>(symbols: &[S]) -> Result<Self, ParseError> {
        let syms: Vec<String> = symbols.iter().map(|s| s.as_ref().to_string()).collect();
        if syms.is_empty() || syms.len() > 3 {
            return Err(ParseError::Syntax {
                offset: 0,
                message: format!("chart must have 1 to 3 symbols, got {}", syms.len()),
            });
        }
        for i in 0..syms.len() {
            for j in (i + 1)..syms.len() {
                if syms[i] == syms[j] {
                    return Err(ParseError::Syntax {
                        offset: 0,
                        message: format!("duplicate chart symbol '{}'", syms[i]),
                    });
                }
            }
        }
        Ok(Chart(Arc::new(syms)))
    }

    /// The default spatial chart `(x, y, z)`.
    pub fn xyz() -> Self {
        Chart::new(&["x", "y", "z"]).unwrap()
    }

    /// One-dimensional chart for time laws.
    pub fn time() -> Self {
        Chart::new(&["t"]).unwrap()
    }

    /// Planar chart `(x, y)` for isoperimetric base data.
    pub fn xy() -> Self {
        Chart::new(&["x", "y"]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|s| s == name)
    }
}

/// Immutable expression tree. Leaves are constants or chart symbols.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Sym(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Sqrt(Box<Expr>),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol '{name}' at byte {offset}")]
    UnknownSymbol { offset: usize, name: String },
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{expr}` at point {point:?}")]
    DivisionByZero { expr: String, point: Vec<f64> },
    #[error("sqrt of non-positive value in `{expr}` at point {point:?}")]
    SqrtDomain { expr: String, point: Vec<f64> },
    #[error("zero base with negative exponent in `{expr}` at point {point:?}")]
    PowDomain { expr: String, point: Vec<f64> },
    #[error("non-finite value in `{expr}` at point {point:?}")]
    NonFinite { expr: String, point: Vec<f64> },
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    chart: &'a Chart,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while matches!(self.src.get(self.pos), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    node = Expr::Add(Box::new(node), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    node = Expr::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut node = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    node = Expr::Mul(Box::new(node), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    node = Expr::Div(Box::new(node), Box::new(self.unary()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.int_literal()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn int_literal(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let negative = if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let digits_start = self.pos;
        while matches!(self.src.get(self.pos), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return self.err(start, "expected integer exponent");
        }
        let text = std::str::from_utf8(&self.src[digits_start..self.pos]).unwrap();
        let mag: i32 = text
            .parse()
            .map_err(|_| ParseError::Syntax { offset: start, message: "exponent out of range".into() })?;
        Ok(if negative { -mag } else { mag })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err(self.pos, "expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => self.err(self.pos, format!("unexpected character '{}'", c as char)),
            None => self.err(self.pos, "unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.src.get(self.pos), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while matches!(self.src.get(self.pos), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.src.get(self.pos), Some(b'0'..=b'9')) {
                while matches!(self.src.get(self.pos), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all (e.g. a following symbol)
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => self.err(start, format!("invalid number '{text}'")),
        }
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.src.get(self.pos), Some(c) if c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let arg = Box::new(self.expr()?);
            if self.peek() != Some(b')') {
                return self.err(self.pos, "expected ')'");
            }
            self.pos += 1;
            return match name.as_str() {
                "sin" => Ok(Expr::Sin(arg)),
                "cos" => Ok(Expr::Cos(arg)),
                "exp" => Ok(Expr::Exp(arg)),
                "sqrt" => Ok(Expr::Sqrt(arg)),
                _ => self.err(start, format!("unknown function '{name}'")),
            };
        }
        match self.chart.index_of(&name) {
            Some(idx) => Ok(Expr::Sym(idx)),
            None => Err(ParseError::UnknownSymbol { offset: start, name }),
        }
    }
}

/// Parse `src` over the given chart. The grammar is total: the result is a
/// full tree or an error with a byte offset, never a partial parse.
pub fn parse_expression(src: &str, chart: &Chart) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let mut p = Parser { src: src.as_bytes(), pos: 0, chart };
    let node = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(ParseError::Syntax {
            offset: p.pos,
            message: format!("unexpected character '{}'", c as char),
        });
    }
    Ok(node)
}

// Precedence levels used by the pretty-printer (higher binds tighter).
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if prec(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Sym(i) => write!(f, "@{i}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 3)
            }
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            Expr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            Expr::Pow(a, n) => {
                child(f, a, 5)?;
                write!(f, "^{n}")
            }
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

/// A scalar field: an expression bound to a chart, evaluable as a [`Jet`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    ast: Expr,
    chart: Chart,
    source: String,
}

impl ScalarField {
    pub fn parse(src: &str, chart: &Chart) -> Result<Self, ParseError> {
        let ast = parse_expression(src, chart)?;
        Ok(ScalarField { ast, chart: chart.clone(), source: src.to_string() })
    }

    pub fn constant(v: f64, chart: &Chart) -> Self {
        ScalarField { ast: Expr::Num(v), chart: chart.clone(), source: format!("{v:?}") }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Render the expression with symbol names substituted back in.
    pub fn pretty(&self) -> String {
        let rendered = self.ast.to_string();
        let mut out = rendered;
        for (i, name) in self.chart.symbols().iter().enumerate() {
            out = out.replace(&format!("@{i}"), name);
        }
        out
    }

    /// Evaluate the field and its partials up to `order` at `point`.
    ///
    /// Exact forward-mode propagation; no finite differences anywhere.
    pub fn eval(&self, point: &[f64], order: usize) -> Result<Jet, EvalError> {
        assert!(order <= MAX_ORDER, "jet order must be at most {MAX_ORDER}");
        assert!(
            point.len() >= self.chart.len(),
            "point dimension {} below chart dimension {}",
            point.len(),
            self.chart.len()
        );
        let jet = eval_node(&self.ast, point, order, self)?;
        if !jet.is_finite() {
            return Err(EvalError::NonFinite {
                expr: self.pretty(),
                point: point.to_vec(),
            });
        }
        Ok(jet)
    }

    /// Value-only fast path used by inner integration loops.
    pub fn eval_value(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = eval_value_node(&self.ast, point, self)?;
        if !v.is_finite() {
            return Err(EvalError::NonFinite { expr: self.pretty(), point: point.to_vec() });
        }
        Ok(v)
    }
}

fn describe(node: &Expr, field: &ScalarField) -> String {
    let mut out = node.to_string();
    for (i, name) in field.chart.symbols().iter().enumerate() {
        out = out.replace(&format!("@{i}"), name);
    }
    out
}

fn eval_node(node: &Expr, point: &[f64], order: usize, field: &ScalarField) -> Result<Jet, EvalError> {
    match node {
        Expr::Num(v) => Ok(Jet::constant(*v, order)),
        Expr::Sym(i) => Ok(Jet::variable(*i, point[*i], order)),
        Expr::Neg(a) => Ok(eval_node(a, point, order, field)?.neg()),
        Expr::Add(a, b) => {
            Ok(eval_node(a, point, order, field)?.add(&eval_node(b, point, order, field)?))
        }
        Expr::Sub(a, b) => {
            Ok(eval_node(a, point, order, field)?.sub(&eval_node(b, point, order, field)?))
        }
        Expr::Mul(a, b) => {
            Ok(eval_node(a, point, order, field)?.mul(&eval_node(b, point, order, field)?))
        }
        Expr::Div(a, b) => {
            let num = eval_node(a, point, order, field)?;
            let den = eval_node(b, point, order, field)?;
            let inv = den.recip().ok_or_else(|| EvalError::DivisionByZero {
                expr: describe(node, field),
                point: point.to_vec(),
            })?;
            Ok(num.mul(&inv))
        }
        Expr::Pow(a, n) => {
            let base = eval_node(a, point, order, field)?;
            base.powi(*n).ok_or_else(|| EvalError::PowDomain {
                expr: describe(node, field),
                point: point.to_vec(),
            })
        }
        Expr::Sin(a) => Ok(eval_node(a, point, order, field)?.sin()),
        Expr::Cos(a) => Ok(eval_node(a, point, order, field)?.cos()),
        Expr::Exp(a) => Ok(eval_node(a, point, order, field)?.exp()),
        Expr::Sqrt(a) => {
            let arg = eval_node(a, point, order, field)?;
            arg.sqrt().ok_or_else(|| EvalError::SqrtDomain {
                expr: describe(node, field),
                point: point.to_vec(),
            })
        }
    }
}

fn eval_value_node(node: &Expr, point: &[f64], field: &ScalarField) -> Result<f64, EvalError> {
    match node {
        Expr::Num(v) => Ok(*v),
        Expr::Sym(i) => Ok(point[*i]),
        Expr::Neg(a) => Ok(-eval_value_node(a, point, field)?),
        Expr::Add(a, b) => Ok(eval_value_node(a, point, field)? + eval_value_node(b, point, field)?),
        Expr::Sub(a, b) => Ok(eval_value_node(a, point, field)? - eval_value_node(b, point, field)?),
        Expr::Mul(a, b) => Ok(eval_value_node(a, point, field)? * eval_value_node(b, point, field)?),
        Expr::Div(a, b) => {
            let den = eval_value_node(b, point, field)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero {
                    expr: describe(node, field),
                    point: point.to_vec(),
                });
            }
            Ok(eval_value_node(a, point, field)? / den)
        }
        Expr::Pow(a, n) => {
            let base = eval_value_node(a, point, field)?;
            if base == 0.0 && *n < 0 {
                return Err(EvalError::PowDomain {
                    expr: describe(node, field),
                    point: point.to_vec(),
                });
            }
            Ok(base.powi(*n))
        }
        Expr::Sin(a) => Ok(eval_value_node(a, point, field)?.sin()),
        Expr::Cos(a) => Ok(eval_value_node(a, point, field)?.cos()),
        Expr::Exp(a) => Ok(eval_value_node(a, point, field)?.exp()),
        Expr::Sqrt(a) => {
            let arg = eval_value_node(a, point, field)?;
            if arg <= 0.0 {
                return Err(EvalError::SqrtDomain {
                    expr: describe(node, field),
                    point: point.to_vec(),
                });
            }
            Ok(arg.sqrt())
        }
    }
}
