//! Tiny expression grammar for payoffs, barriers and generators.
//!
//! Identifiers: `x`, `t`, `y`, `z` and component references `y1..y9`.
//! Operators `+ - * / ^` with the usual precedence, plus the functions
//! `tanh`, `relu`, `abs`, `sin`, `min`, `max`, `pow`. The shorthand `c:V`
//! denotes the constant `V`. Anything else is rejected at parse time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    T,
    YOwn,
    Z,
    /// 0-based component index for `y1..y9`.
    YIdx(usize),
}

#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Tanh(Box<Expr>),
    Relu(Box<Expr>),
    Abs(Box<Expr>),
    Sin(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

/// Values the variables take during one evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalCtx<'a> {
    pub x: f64,
    pub t: f64,
    pub z: f64,
    pub y_own: f64,
    pub y_vec: &'a [f64],
}

impl<'a> EvalCtx<'a> {
    pub fn for_payoff(x: f64) -> Self {
        EvalCtx {
            x,
            ..Default::default()
        }
    }

    pub fn for_curve(t: f64) -> Self {
        EvalCtx {
            t,
            ..Default::default()
        }
    }
}

impl Expr {
    pub fn eval(&self, ctx: &EvalCtx<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X) => ctx.x,
            Expr::Var(Var::T) => ctx.t,
            Expr::Var(Var::Z) => ctx.z,
            Expr::Var(Var::YOwn) => ctx.y_own,
            Expr::Var(Var::YIdx(k)) => ctx.y_vec.get(*k).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Add(a, b) => a.eval(ctx) + b.eval(ctx),
            Expr::Sub(a, b) => a.eval(ctx) - b.eval(ctx),
            Expr::Mul(a, b) => a.eval(ctx) * b.eval(ctx),
            Expr::Div(a, b) => a.eval(ctx) / b.eval(ctx),
            Expr::Pow(a, b) => a.eval(ctx).powf(b.eval(ctx)),
            Expr::Tanh(e) => e.eval(ctx).tanh(),
            Expr::Relu(e) => e.eval(ctx).max(0.0),
            Expr::Abs(e) => e.eval(ctx).abs(),
            Expr::Sin(e) => e.eval(ctx).sin(),
            Expr::Min(a, b) => a.eval(ctx).min(b.eval(ctx)),
            Expr::Max(a, b) => a.eval(ctx).max(b.eval(ctx)),
        }
    }

    pub fn used_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_by_key(|v| format!("{v:?}"));
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(e) | Expr::Tanh(e) | Expr::Relu(e) | Expr::Abs(e) | Expr::Sin(e) => {
                e.collect_vars(out)
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Rejects the expression if it uses a variable outside `allowed`.
    pub fn restrict_vars(&self, allowed: &[Var], what: &str) -> Result<()> {
        for v in self.used_vars() {
            let ok = allowed.contains(&v)
                || matches!(v, Var::YIdx(_)) && allowed.contains(&Var::YIdx(0));
            if !ok {
                return Err(Error::Config(format!(
                    "{what}: variable {v:?} is not allowed in this context"
                )));
            }
        }
        Ok(())
    }

    /// Largest component index referenced through `y1..y9`, if any.
    pub fn max_component_index(&self) -> Option<usize> {
        self.used_vars()
            .iter()
            .filter_map(|v| match v {
                Var::YIdx(k) => Some(*k),
                _ => None,
            })
            .max()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parses the grammar above; `c:V` is accepted as constant shorthand.
pub fn parse_expr(input: &str) -> Result<Expr> {
    let trimmed = input.trim();
    if let Some(rest) = trimmed.strip_prefix("c:") {
        let v: f64 = rest
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad constant shorthand '{trimmed}'")))?;
        return Ok(Expr::Const(v));
    }
    let mut p = Parser {
        src: trimmed.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Config(format!(
            "trailing input at byte {} of expression '{trimmed}'",
            p.pos
        )));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "expected '{}' at byte {} of expression",
                c as char, self.pos
            )))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        // Unary minus binds looser than power: -x^2 is -(x^2).
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if self.eat(b'^') {
            // Right-associative power.
            let exp = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            other => Err(Error::Config(format!(
                "unexpected input {:?} at byte {} of expression",
                other.map(|c| c as char),
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos > start
                && self
                    .src
                    .get(self.pos + 1)
                    .map(|n| n.is_ascii_digit() || *n == b'+' || *n == b'-')
                    .unwrap_or(false)
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Config(format!("bad number '{text}' in expression")))
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let first = self.expr()?;
            let two_args = |p: &mut Self, first: Expr| -> Result<(Expr, Expr)> {
                p.expect(b',')?;
                let second = p.expr()?;
                p.expect(b')')?;
                Ok((first, second))
            };
            return match name.as_str() {
                "tanh" | "relu" | "abs" | "sin" => {
                    self.expect(b')')?;
                    let b = Box::new(first);
                    Ok(match name.as_str() {
                        "tanh" => Expr::Tanh(b),
                        "relu" => Expr::Relu(b),
                        "abs" => Expr::Abs(b),
                        _ => Expr::Sin(b),
                    })
                }
                "min" => {
                    let (a, b) = two_args(self, first)?;
                    Ok(Expr::Min(Box::new(a), Box::new(b)))
                }
                "max" => {
                    let (a, b) = two_args(self, first)?;
                    Ok(Expr::Max(Box::new(a), Box::new(b)))
                }
                "pow" => {
                    let (a, b) = two_args(self, first)?;
                    Ok(Expr::Pow(Box::new(a), Box::new(b)))
                }
                _ => Err(Error::Config(format!("unknown function '{name}'"))),
            };
        }
        match name.as_str() {
            "x" => Ok(Expr::Var(Var::X)),
            "t" => Ok(Expr::Var(Var::T)),
            "y" => Ok(Expr::Var(Var::YOwn)),
            "z" => Ok(Expr::Var(Var::Z)),
            _ => {
                if let Some(rest) = name.strip_prefix('y') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if (1..=9).contains(&k) {
                            return Ok(Expr::Var(Var::YIdx(k - 1)));
                        }
                    }
                }
                Err(Error::Config(format!("unknown identifier '{name}'")))
            }
        }
    }
}
