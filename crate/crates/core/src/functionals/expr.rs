//! A small closed-form expression language over `t` and the path endpoint.
//!
//! Grammar (usual precedence, `^` binds tightest and associates right):
//!
//! ```text
//! expr   := term  { ("+" | "-") term }
//! term   := unary { ("*" | "/") unary }
//! unary  := "-" unary | power
//! power  := atom [ "^" unary ]
//! atom   := number | "t" | "x" | "x"<digits> | fn "(" expr ")" | "(" expr ")"
//! fn     := "exp" | "log" | "sin" | "cos"
//! ```
//!
//! `x` is shorthand for `x1`; coordinates are one-based in the source and
//! zero-based internally. Expressions differentiate symbolically in `t` and
//! in each coordinate, which is what makes cylinder functionals carry exact
//! derivative formulas instead of finite differences.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Expr {
    Const(f64),
    T,
    /// Zero-based path coordinate.
    X(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

// Smart constructors fold constants and drop additive/multiplicative units so
// symbolic derivatives stay readable and cheap to evaluate.

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), b) if z == 0.0 => b,
        (a, Expr::Const(z)) if z == 0.0 => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, Expr::Const(z)) if z == 0.0 => a,
        (Expr::Const(z), b) if z == 0.0 => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), b) if o == 1.0 => b,
        (a, Expr::Const(o)) if o == 1.0 => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, Expr::Const(o)) if o == 1.0 => a,
        (Expr::Const(z), b) if z == 0.0 && b != Expr::Const(0.0) => Expr::Const(0.0),
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(e)) if *e == 1.0 => a,
        (_, Expr::Const(e)) if *e == 0.0 => Expr::Const(1.0),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error(format!("unexpected trailing {:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    /// Value at time `t` and endpoint `x`. Coordinates must already be
    /// validated against `x.len()` (see [`Expr::needed_dim`]); domain errors
    /// of the math functions surface as non-finite values for the caller to
    /// classify.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::T => t,
            Expr::X(c) => x[*c],
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Pow(a, b) => a.eval(t, x).powf(b.eval(t, x)),
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Exp(a) => a.eval(t, x).exp(),
            Expr::Log(a) => a.eval(t, x).ln(),
            Expr::Sin(a) => a.eval(t, x).sin(),
            Expr::Cos(a) => a.eval(t, x).cos(),
        }
    }

    /// Smallest endpoint dimension the expression can be evaluated against.
    pub fn needed_dim(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::T => 0,
            Expr::X(c) => c + 1,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.needed_dim().max(b.needed_dim()),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sin(a) | Expr::Cos(a) => {
                a.needed_dim()
            }
        }
    }

    pub fn uses_t(&self) -> bool {
        match self {
            Expr::T => true,
            Expr::Const(_) | Expr::X(_) => false,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses_t() || b.uses_t(),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sin(a) | Expr::Cos(a) => a.uses_t(),
        }
    }

    pub fn diff_t(&self) -> Expr {
        self.diff(&Var::T)
    }

    /// Derivative in the zero-based coordinate `c`.
    pub fn diff_x(&self, c: usize) -> Expr {
        self.diff(&Var::X(c))
    }

    fn diff(&self, var: &Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::T => Expr::Const(if matches!(var, Var::T) { 1.0 } else { 0.0 }),
            Expr::X(c) => Expr::Const(if matches!(var, Var::X(v) if v == c) {
                1.0
            } else {
                0.0
            }),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), Expr::Const(2.0)),
            ),
            Expr::Pow(a, b) => match &**b {
                // Constant exponent: the power rule.
                Expr::Const(e) => mul(
                    mul(Expr::Const(*e), pow((**a).clone(), Expr::Const(e - 1.0))),
                    a.diff(var),
                ),
                // General case via a^b = exp(b log a).
                _ => mul(
                    self.clone(),
                    add(
                        mul(b.diff(var), Expr::Log(a.clone())),
                        div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                    ),
                ),
            },
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Exp(a) => mul(self.clone(), a.diff(var)),
            Expr::Log(a) => div(a.diff(var), (**a).clone()),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff(var)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff(var))),
        }
    }
}

enum Var {
    T,
    X(usize),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::T => write!(f, "t"),
            Expr::X(c) => write!(f, "x{}", c + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '/' => {
                tokens.push(Token::Slash);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::Open);
                i += 1;
            }
            ')' => {
                tokens.push(Token::Close);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Exponent suffix like 1e-3 / 2.5e4.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number {text:?} in {src:?}")))?;
                tokens.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                tokens.push(Token::Ident(src[start..i].to_string()));
            }
            other => {
                return Err(Error::Parse(format!(
                    "unexpected character {other:?} in expression {src:?}"
                )))
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, what: String) -> Error {
        Error::Parse(format!("{what} in expression {:?}", self.src))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.bump() {
            Some(Token::Close) => Ok(()),
            other => Err(self.error(format!("expected ')', found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    e = add(e, self.term()?);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    e = sub(e, self.term()?);
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    e = mul(e, self.unary()?);
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    e = div(e, self.unary()?);
                }
                _ => return Ok(e),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            return Ok(neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            // Right-associative; the exponent may carry a sign.
            let e = self.unary()?;
            return Ok(pow(base, e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Open) => {
                let e = self.expr()?;
                self.expect_close()?;
                Ok(e)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::T),
                "x" => Ok(Expr::X(0)),
                "exp" | "log" | "sin" | "cos" => {
                    match self.bump() {
                        Some(Token::Open) => {}
                        other => {
                            return Err(
                                self.error(format!("expected '(' after {name}, found {other:?}"))
                            )
                        }
                    }
                    let arg = Box::new(self.expr()?);
                    self.expect_close()?;
                    Ok(match name.as_str() {
                        "exp" => Expr::Exp(arg),
                        "log" => Expr::Log(arg),
                        "sin" => Expr::Sin(arg),
                        _ => Expr::Cos(arg),
                    })
                }
                _ => {
                    if let Some(digits) = name.strip_prefix('x') {
                        if let Ok(c) = digits.parse::<usize>() {
                            if c >= 1 {
                                return Ok(Expr::X(c - 1));
                            }
                        }
                    }
                    Err(self.error(format!("unknown identifier {name:?}")))
                }
            },
            other => Err(self.error(format!("expected a value, found {other:?}"))),
        }
    }
}
