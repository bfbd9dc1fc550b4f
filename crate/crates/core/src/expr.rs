//! Small symbolic expression language for model coefficients.
//!
//! Expressions are written over the variables `t`, `x1..xn` (with `x` and
//! `y` as aliases for `x1` and `x2`) and, where a model allows it, the
//! solution value `r`. The grammar covers `+ - * / ^`, parentheses, the
//! functions `sin cos tan exp ln log sqrt tanh sinh cosh sech` and the
//! constants `pi` and `e`. Every expression can be differentiated
//! symbolically, which is how the flow solvers obtain the first and second
//! space derivatives of the noise coefficients.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Upper bound on the number of variables an expression may reference
/// (`t`, up to six space coordinates and `r`).
pub const MAX_VARS: usize = 8;

/// Maps variable names to slots in the evaluation vector `[t, x1..xn, r]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarSpace {
    dim: usize,
    with_r: bool,
}

impl VarSpace {
    pub fn new(dim: usize, with_r: bool) -> Result<Self> {
        if dim == 0 || dim + 1 + usize::from(with_r) > MAX_VARS {
            return Err(Error::invalid(format!(
                "expression space dimension {dim} not supported (1..={})",
                MAX_VARS - 2
            )));
        }
        Ok(Self { dim, with_r })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        1 + self.dim + usize::from(self.with_r)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self) -> usize {
        0
    }

    pub fn space(&self, i: usize) -> usize {
        1 + i
    }

    pub fn r(&self) -> Option<usize> {
        self.with_r.then_some(1 + self.dim)
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        match name {
            "t" => Some(0),
            "r" => self.r(),
            "x" => Some(1),
            "y" if self.dim >= 2 => Some(2),
            _ => {
                let idx: usize = name.strip_prefix('x')?.parse().ok()?;
                (1..=self.dim).contains(&idx).then_some(idx)
            }
        }
    }

    fn name(&self, slot: usize) -> String {
        match slot {
            0 => "t".into(),
            s if Some(s) == self.r() => "r".into(),
            s => format!("x{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Sinh,
    Cosh,
    Sech,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sech" => Func::Sech,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sech => "sech",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Sech => 1.0 / v.cosh(),
        }
    }

    /// Derivative of the function evaluated at the argument `u`.
    fn derivative(self, u: &Expr) -> Expr {
        let u = u.clone();
        match self {
            Func::Sin => Expr::func(Func::Cos, u),
            Func::Cos => Expr::neg(Expr::func(Func::Sin, u)),
            Func::Tan => Expr::add(
                Expr::constant(1.0),
                Expr::powi(Expr::func(Func::Tan, u), 2.0),
            ),
            Func::Exp => Expr::func(Func::Exp, u),
            Func::Ln => Expr::div(Expr::constant(1.0), u),
            Func::Sqrt => Expr::div(
                Expr::constant(0.5),
                Expr::func(Func::Sqrt, u),
            ),
            Func::Tanh => Expr::powi(Expr::func(Func::Sech, u), 2.0),
            Func::Sinh => Expr::func(Func::Cosh, u),
            Func::Cosh => Expr::func(Func::Sinh, u),
            Func::Sech => Expr::neg(Expr::mul(
                Expr::func(Func::Sech, u.clone()),
                Expr::func(Func::Tanh, u),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Func(Func, Expr),
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr(Arc::new(Node::Const(v)))
    }

    pub fn var(slot: usize) -> Self {
        Expr(Arc::new(Node::Var(slot)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn neg(a: Expr) -> Self {
        match *a.0 {
            Node::Const(v) => Expr::constant(-v),
            Node::Neg(ref inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Neg(a))),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr(Arc::new(Node::Add(a, b))),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr(Arc::new(Node::Sub(a, b))),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) if x == 0.0 => Expr::constant(0.0),
            (_, Some(y)) if y == 0.0 => Expr::constant(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr(Arc::new(Node::Mul(a, b))),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => Expr::constant(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr(Arc::new(Node::Div(a, b))),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x.powf(y)),
            (_, Some(y)) if y == 0.0 => Expr::constant(1.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr(Arc::new(Node::Pow(a, b))),
        }
    }

    pub fn powi(a: Expr, k: f64) -> Self {
        Expr::pow(a, Expr::constant(k))
    }

    pub fn func(f: Func, a: Expr) -> Self {
        match a.as_const() {
            Some(v) => Expr::constant(f.apply(v)),
            None => Expr(Arc::new(Node::Func(f, a))),
        }
    }

    /// Parses `src` against the variable space `vars`.
    pub fn parse(src: &str, vars: &VarSpace) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let expr = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(Error::Expression {
                pos: tok.pos,
                msg: format!("unexpected trailing input {:?}", tok.kind),
            });
        }
        Ok(expr)
    }

    /// Evaluates the expression at the variable vector `vals`.
    pub fn eval(&self, vals: &[f64]) -> f64 {
        match *self.0 {
            Node::Const(v) => v,
            Node::Var(i) => vals[i],
            Node::Neg(ref a) => -a.eval(vals),
            Node::Add(ref a, ref b) => a.eval(vals) + b.eval(vals),
            Node::Sub(ref a, ref b) => a.eval(vals) - b.eval(vals),
            Node::Mul(ref a, ref b) => a.eval(vals) * b.eval(vals),
            Node::Div(ref a, ref b) => a.eval(vals) / b.eval(vals),
            Node::Pow(ref a, ref b) => {
                let base = a.eval(vals);
                match b.as_const() {
                    Some(k) if k == k.trunc() && k.abs() <= 64.0 => base.powi(k as i32),
                    Some(k) => base.powf(k),
                    None => base.powf(b.eval(vals)),
                }
            }
            Node::Func(f, ref a) => f.apply(a.eval(vals)),
        }
    }

    /// Symbolic partial derivative with respect to variable slot `slot`.
    pub fn diff(&self, slot: usize) -> Expr {
        match *self.0 {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(i) => Expr::constant(if i == slot { 1.0 } else { 0.0 }),
            Node::Neg(ref a) => Expr::neg(a.diff(slot)),
            Node::Add(ref a, ref b) => Expr::add(a.diff(slot), b.diff(slot)),
            Node::Sub(ref a, ref b) => Expr::sub(a.diff(slot), b.diff(slot)),
            Node::Mul(ref a, ref b) => Expr::add(
                Expr::mul(a.diff(slot), b.clone()),
                Expr::mul(a.clone(), b.diff(slot)),
            ),
            Node::Div(ref a, ref b) => {
                let da = a.diff(slot);
                let db = b.diff(slot);
                if db.is_zero() {
                    Expr::div(da, b.clone())
                } else {
                    Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                        Expr::powi(b.clone(), 2.0),
                    )
                }
            }
            Node::Pow(ref a, ref b) => {
                let da = a.diff(slot);
                match b.as_const() {
                    Some(k) => Expr::mul(
                        Expr::mul(Expr::constant(k), Expr::powi(a.clone(), k - 1.0)),
                        da,
                    ),
                    None => {
                        // d(a^b) = a^b (b' ln a + b a'/a)
                        let db = b.diff(slot);
                        Expr::mul(
                            self.clone(),
                            Expr::add(
                                Expr::mul(db, Expr::func(Func::Ln, a.clone())),
                                Expr::div(Expr::mul(b.clone(), da), a.clone()),
                            ),
                        )
                    }
                }
            }
            Node::Func(f, ref a) => {
                let da = a.diff(slot);
                if da.is_zero() {
                    Expr::constant(0.0)
                } else {
                    Expr::mul(f.derivative(a), da)
                }
            }
        }
    }

    /// Whether the expression references variable slot `slot`.
    pub fn depends_on(&self, slot: usize) -> bool {
        match *self.0 {
            Node::Const(_) => false,
            Node::Var(i) => i == slot,
            Node::Neg(ref a) | Node::Func(_, ref a) => a.depends_on(slot),
            Node::Add(ref a, ref b)
            | Node::Sub(ref a, ref b)
            | Node::Mul(ref a, ref b)
            | Node::Div(ref a, ref b)
            | Node::Pow(ref a, ref b) => a.depends_on(slot) || b.depends_on(slot),
        }
    }

    /// Renders the expression with the variable names of `vars`.
    pub fn display<'a>(&'a self, vars: &'a VarSpace) -> impl fmt::Display + 'a {
        Display { expr: self, vars }
    }
}

struct Display<'a> {
    expr: &'a Expr,
    vars: &'a VarSpace,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vars = self.vars;
        let sub = |e| Display { expr: e, vars };
        match *self.expr.0 {
            Node::Const(v) => write!(f, "{v}"),
            Node::Var(i) => write!(f, "{}", self.vars.name(i)),
            Node::Neg(ref a) => write!(f, "(-{})", sub(a)),
            Node::Add(ref a, ref b) => write!(f, "({} + {})", sub(a), sub(b)),
            Node::Sub(ref a, ref b) => write!(f, "({} - {})", sub(a), sub(b)),
            Node::Mul(ref a, ref b) => write!(f, "({} * {})", sub(a), sub(b)),
            Node::Div(ref a, ref b) => write!(f, "({} / {})", sub(a), sub(b)),
            Node::Pow(ref a, ref b) => write!(f, "({} ^ {})", sub(a), sub(b)),
            Node::Func(func, ref a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Expression {
                pos: start,
                msg: format!("bad number {text:?}"),
            })?;
            out.push(Token {
                kind: TokKind::Num(v),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                pos: start,
            });
        } else if c == '*' && i + 1 < bytes.len() && bytes[i + 1] == b'*' {
            out.push(Token {
                kind: TokKind::Op('^'),
                pos: start,
            });
            i += 2;
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
                '(' => TokKind::LParen,
                ')' => TokKind::RParen,
                _ => {
                    return Err(Error::Expression {
                        pos: start,
                        msg: format!("unexpected character {c:?}"),
                    })
                }
            };
            out.push(Token { kind, pos: start });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a VarSpace,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&TokKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.pos)
            .unwrap_or_else(|| self.tokens.last().map_or(0, |t| t.pos + 1))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Expression {
            pos: self.here(),
            msg: msg.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(TokKind::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::add(lhs, rhs)
            } else {
                Expr::sub(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(TokKind::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::mul(lhs, rhs)
            } else {
                Expr::div(lhs, rhs)
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(TokKind::Op('-')) => {
                self.pos += 1;
                Ok(Expr::neg(self.unary()?))
            }
            Some(TokKind::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(TokKind::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of expression"))?;
        self.pos += 1;
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::constant(v)),
            TokKind::LParen => {
                let e = self.expr()?;
                match self.peek() {
                    Some(TokKind::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(self.err("expected ')'")),
                }
            }
            TokKind::Ident(name) => {
                if let Some(TokKind::LParen) = self.peek() {
                    let f = Func::from_name(&name).ok_or(Error::Expression {
                        pos: tok.pos,
                        msg: format!("unknown function {name:?}"),
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    match self.peek() {
                        Some(TokKind::RParen) => self.pos += 1,
                        _ => return Err(self.err("expected ')' after function argument")),
                    }
                    return Ok(Expr::func(f, arg));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    "e" => Ok(Expr::constant(std::f64::consts::E)),
                    _ => self.vars.lookup(&name).map(Expr::var).ok_or(Error::Expression {
                        pos: tok.pos,
                        msg: format!("unknown variable {name:?}"),
                    }),
                }
            }
            other => Err(Error::Expression {
                pos: tok.pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(n: usize) -> VarSpace {
        VarSpace::new(n, true).unwrap()
    }

    fn eval(src: &str, vals: &[f64]) -> f64 {
        Expr::parse(src, &vs(2)).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        let v = [0.0, 2.0, 3.0, 0.0];
        assert_eq!(eval("1 + 2 * 3", &v), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &v), 512.0);
        assert_eq!(eval("-x1^2", &v), -4.0);
        assert_eq!(eval("x1 - x2 - 1", &v), -2.0);
        assert_eq!(eval("x * y / 2", &v), 3.0);
        assert_eq!(eval("2**3", &v), 8.0);
        assert!((eval("1.5e-1 + pi", &v) - (0.15 + std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn functions() {
        let v = [0.5, 0.3, 0.0, 2.0];
        assert!((eval("tanh(x1)", &v) - 0.3f64.tanh()).abs() < 1e-15);
        assert!((eval("sech(x1)^2", &v) - 1.0 / 0.3f64.cosh().powi(2)).abs() < 1e-15);
        assert!((eval("exp(t) * r", &v) - 0.5f64.exp() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        let err = Expr::parse("1 + foo", &vs(1)).unwrap_err();
        assert!(matches!(err, Error::Expression { pos: 4, .. }), "{err}");
        assert!(Expr::parse("bar(x)", &vs(1)).is_err());
        assert!(Expr::parse("(x + 1", &vs(1)).is_err());
        assert!(Expr::parse("x2", &vs(1)).is_err());
        assert!(Expr::parse("r", &VarSpace::new(1, false).unwrap()).is_err());
        assert!(Expr::parse("1 2", &vs(1)).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let space = vs(2);
        let srcs = [
            "sin(x1) * cos(x2) + x1^3",
            "tanh(x1 * x2) / (1 + x1^2)",
            "exp(-t * x1) * sech(x2)",
            "sqrt(2 + x1^2) * ln(3 + x2^2)",
            "(1 + x1^2) ^ (0.5 * x2)",
            "r * exp(x1 * t) - r^2 * x2",
        ];
        let point = [0.3, 0.7, -0.4, 1.3];
        let h = 1e-6;
        for src in srcs {
            let e = Expr::parse(src, &space).unwrap();
            for slot in 0..space.len() {
                let d = e.diff(slot).eval(&point);
                let mut p = point;
                let mut m = point;
                p[slot] += h;
                m[slot] -= h;
                let fd = (e.eval(&p) - e.eval(&m)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{src} d/{slot}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn constant_folding() {
        let space = vs(1);
        let e = Expr::parse("3 * x + 2", &space).unwrap();
        assert_eq!(e.diff(1).as_const(), Some(3.0));
        assert!(e.diff(0).is_zero());
        assert!(Expr::parse("0 * sin(x)", &space).unwrap().is_zero());
        assert!(e.depends_on(1) && !e.depends_on(0));
    }
}
