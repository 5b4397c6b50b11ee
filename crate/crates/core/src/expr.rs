//! Small closed-form expression language for initial data, forcing and test
//! functions.
//!
//! Grammar: `+ - * /`, integer powers `^n`, parentheses, the variables
//! `x y z t`, the constant `pi`, and the functions `sin cos exp bump`, where
//! `bump(s) = exp(1 - 1/(1 - s))` for `s < 1` and `0` otherwise.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
    T,
}

impl Var {
    pub const SPATIAL: [Var; 3] = [Var::X, Var::Y, Var::Z];

    fn slot(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Z => 2,
            Var::T => 3,
        }
    }

    fn name(self) -> &'static str {
        ["x", "y", "z", "t"][self.slot()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Func(Func, Box<Expr>),
    /// `order`-th derivative of the bump profile, applied to the argument.
    Bump(u32, Box<Expr>),
}

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => c(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => c(x - y),
        (e, Expr::Const(z)) if z == 0.0 => e,
        (Expr::Const(z), e) if z == 0.0 => neg(e),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => c(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => c(0.0),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => c(x / y),
        (Expr::Const(z), _) if z == 0.0 => c(0.0),
        (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => c(-x),
        Expr::Neg(e) => *e,
        e => Expr::Neg(Box::new(e)),
    }
}

fn pow(a: Expr, n: u32) -> Expr {
    match (a, n) {
        (_, 0) => c(1.0),
        (e, 1) => e,
        (Expr::Const(x), n) => c(x.powi(n as i32)),
        (e, n) => Expr::Pow(Box::new(e), n),
    }
}

/// Coefficients (ascending powers of `w`) of `P_k` with
/// `bump^(k)(s) = bump(s) · P_k(1/(1-s))`.
fn bump_poly(order: u32) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..order {
        // P_{k+1}(w) = w² (P_k'(w) - P_k(w))
        let mut next = vec![0.0; p.len() + 2];
        for (i, &a) in p.iter().enumerate() {
            next[i + 2] -= a;
            if i > 0 {
                next[i + 1] += i as f64 * a;
            }
        }
        p = next;
    }
    p
}

fn bump_eval(order: u32, s: f64) -> f64 {
    if s >= 1.0 {
        return 0.0;
    }
    let w = 1.0 / (1.0 - s);
    let base = (1.0 - w).exp();
    if base == 0.0 {
        return 0.0;
    }
    let poly = bump_poly(order);
    let val = poly.iter().rev().fold(0.0, |acc, &a| acc * w + a);
    base * val
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(self, rhs)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected token {:?} in {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        c(v)
    }

    pub fn eval(&self, x: [f64; 3], t: f64) -> f64 {
        self.eval_vars(&[x[0], x[1], x[2], t])
    }

    fn eval_vars(&self, v: &[f64; 4]) -> f64 {
        match self {
            Expr::Const(a) => *a,
            Expr::Var(var) => v[var.slot()],
            Expr::Neg(a) => -a.eval_vars(v),
            Expr::Add(a, b) => a.eval_vars(v) + b.eval_vars(v),
            Expr::Sub(a, b) => a.eval_vars(v) - b.eval_vars(v),
            Expr::Mul(a, b) => a.eval_vars(v) * b.eval_vars(v),
            Expr::Div(a, b) => a.eval_vars(v) / b.eval_vars(v),
            Expr::Pow(a, n) => a.eval_vars(v).powi(*n as i32),
            Expr::Func(f, a) => {
                let s = a.eval_vars(v);
                match f {
                    Func::Sin => s.sin(),
                    Func::Cos => s.cos(),
                    Func::Exp => s.exp(),
                }
            }
            Expr::Bump(k, a) => bump_eval(*k, a.eval_vars(v)),
        }
    }

    pub fn derivative(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var(w) => c(if *w == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                pow((**b).clone(), 2),
            ),
            Expr::Pow(a, n) => mul(
                mul(c(*n as f64), pow((**a).clone(), n - 1)),
                a.derivative(var),
            ),
            Expr::Func(f, a) => {
                let inner = a.derivative(var);
                if inner == c(0.0) {
                    return c(0.0);
                }
                let outer = match f {
                    Func::Sin => Expr::Func(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Func(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                };
                mul(outer, inner)
            }
            Expr::Bump(k, a) => {
                let inner = a.derivative(var);
                if inner == c(0.0) {
                    return c(0.0);
                }
                mul(Expr::Bump(k + 1, a.clone()), inner)
            }
        }
    }

    /// Polynomial degree in `var`, or `None` if the expression is not a
    /// polynomial in that variable.
    pub fn degree(&self, var: Var) -> Option<u32> {
        match self {
            Expr::Const(_) => Some(0),
            Expr::Var(w) => Some(u32::from(*w == var)),
            Expr::Neg(a) => a.degree(var),
            Expr::Add(a, b) | Expr::Sub(a, b) => Some(a.degree(var)?.max(b.degree(var)?)),
            Expr::Mul(a, b) => Some(a.degree(var)? + b.degree(var)?),
            Expr::Div(a, b) => {
                if b.depends_on(var) {
                    None
                } else {
                    a.degree(var)
                }
            }
            Expr::Pow(a, n) => Some(a.degree(var)? * n),
            Expr::Func(_, a) | Expr::Bump(_, a) => {
                if a.depends_on(var) {
                    None
                } else {
                    Some(0)
                }
            }
        }
    }

    /// Per-variable degrees `[x, y, z, t]` when the expression is a polynomial
    /// in all four variables jointly.
    pub fn polynomial_degrees(&self) -> Option<[u32; 4]> {
        Some([
            self.degree(Var::X)?,
            self.degree(Var::Y)?,
            self.degree(Var::Z)?,
            self.degree(Var::T)?,
        ])
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == var,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) | Expr::Bump(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(a) => write!(f, "{a:?}"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Func(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
            Expr::Bump(0, a) => write!(f, "bump({a})"),
            Expr::Bump(k, a) => write!(f, "bump'{k}({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number {text:?}")))?;
            out.push(Tok::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(ch) {
            out.push(Tok::Op(ch));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {ch:?} in {src:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Error::Expr(format!("expected {op:?} at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat_op('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            match self.peek().cloned() {
                Some(Tok::Num(n)) if n >= 0.0 && n.fract() == 0.0 && n <= 64.0 => {
                    self.pos += 1;
                    Ok(Expr::Pow(Box::new(base), n as u32))
                }
                other => Err(Error::Expr(format!(
                    "exponent must be a non-negative integer literal, got {other:?}"
                ))),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let var = match name.as_str() {
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    "z" => Some(Var::Z),
                    "t" => Some(Var::T),
                    _ => None,
                };
                if let Some(v) = var {
                    return Ok(Expr::Var(v));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "bump" => None,
                    _ => return Err(Error::Expr(format!("unknown identifier {name:?}"))),
                };
                self.expect_op('(')?;
                let arg = Box::new(self.expr()?);
                self.expect_op(')')?;
                Ok(match func {
                    Some(f) => Expr::Func(f, arg),
                    None => Expr::Bump(0, arg),
                })
            }
            other => Err(Error::Expr(format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: [f64; 3], t: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, t)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", [0.0; 3], 0.0), 7.0);
        assert_eq!(ev("-x^2", [3.0, 0.0, 0.0], 0.0), -9.0);
        assert_eq!(ev("2 / 4 / 2", [0.0; 3], 0.0), 0.25);
        assert_eq!(ev("(x - y) * z + t", [5.0, 2.0, 3.0], 1.0), 10.0);
        assert_eq!(ev("1e-3 * 2E2", [0.0; 3], 0.0), 0.2);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("x +").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("x ^ y").is_err());
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("x $ 1").is_err());
    }

    #[test]
    fn bump_profile() {
        assert_eq!(ev("bump(0)", [0.0; 3], 0.0), 1.0);
        assert_eq!(ev("bump(1)", [0.0; 3], 0.0), 0.0);
        assert_eq!(ev("bump(2)", [0.0; 3], 0.0), 0.0);
        let v = ev("bump(0.5)", [0.0; 3], 0.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "sin(2*x)*cos(y) + z^3*t",
            "exp(-x*y) / (1 + z^2)",
            "bump(4*((x-0.5)^2 + (y-0.5)^2 + (z-0.5)^2))",
            "bump(x)*x^2",
        ];
        let pts = [[0.3, 0.45, 0.6], [0.52, 0.41, 0.55], [0.1, 0.2, 0.3]];
        for src in cases {
            let e = Expr::parse(src).unwrap();
            for var in [Var::X, Var::Y, Var::Z, Var::T] {
                let d = e.derivative(var);
                let dd = d.derivative(var);
                for p in pts {
                    let t = 0.7;
                    let step = 1e-5;
                    let at = |s: f64| {
                        let mut v = [p[0], p[1], p[2], t];
                        v[var.slot()] += s;
                        e.eval([v[0], v[1], v[2]], v[3])
                    };
                    let fd = (at(step) - at(-step)) / (2.0 * step);
                    let fd2 = (at(1e-4) - 2.0 * at(0.0) + at(-1e-4)) / 1e-8;
                    let an = d.eval(p, t);
                    let an2 = dd.eval(p, t);
                    assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{src} d{var:?}: {fd} vs {an}");
                    assert!((fd2 - an2).abs() < 1e-4 * (1.0 + an2.abs()), "{src} d2{var:?}: {fd2} vs {an2}");
                }
            }
        }
    }

    #[test]
    fn bump_poly_low_orders() {
        // P1 = -w², P2 = w⁴ - 2w³
        assert_eq!(bump_poly(1), vec![0.0, 0.0, -1.0]);
        assert_eq!(bump_poly(2), vec![0.0, 0.0, 0.0, -2.0, 1.0]);
    }

    #[test]
    fn degrees() {
        let e = Expr::parse("x^2*y + 3*z - t/2").unwrap();
        assert_eq!(e.polynomial_degrees(), Some([2, 1, 1, 1]));
        let e = Expr::parse("sin(x) + y").unwrap();
        assert_eq!(e.degree(Var::X), None);
        assert_eq!(e.degree(Var::Y), Some(1));
        assert_eq!(e.polynomial_degrees(), None);
        let e = Expr::parse("x / y").unwrap();
        assert_eq!(e.degree(Var::X), Some(1));
        assert_eq!(e.degree(Var::Y), None);
        assert_eq!(e.polynomial_degrees(), None);
        let e = Expr::parse("(x + 1)^3 / 2 + sin(pi)").unwrap();
        assert_eq!(e.polynomial_degrees(), Some([3, 0, 0, 0]));
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("bump(x^2) * sin(y) - exp(-z) / (t + 2)").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for p in [[0.1, 0.2, 0.3], [0.4, -0.5, 0.6]] {
            assert_eq!(e.eval(p, 0.3), again.eval(p, 0.3));
        }
    }
}
