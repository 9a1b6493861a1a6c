//! Arithmetic expressions over (x, y, u) with symbolic differentiation in y.
//!
//! Grammar (infix, case-sensitive):
//!   expr   := term (('+'|'-') term)*
//!   term   := factor (('*'|'/') factor)*
//!   factor := '-' factor | atom ('^' uint)?
//!   atom   := number | 'x' | 'y' | 'u' | 'pi' | func '(' expr ')' | '(' expr ')'
//!   func   := sin | cos | tanh | exp
//! `exp` saturates its argument at +/-30 so runaway states cannot overflow;
//! its symbolic derivative ignores the saturation kink, which presets never
//! reach. Coefficients are evaluated per grid node through a compiled
//! stack program, so hot loops avoid tree walking.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Y,
    U,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Tanh(Box<Expr>),
    Exp(Box<Expr>),
}

const EXP_CLAMP: f64 = 30.0;

fn clamped_exp(a: f64) -> f64 {
    a.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser { bytes: text.as_bytes(), pos: 0, src: text };
        p.skip_ws();
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(Error::Invalid(format!(
                "trailing input at byte {} in expression {:?}",
                p.pos, text
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64, u: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Y => y,
            Expr::U => u,
            Expr::Add(a, b) => a.eval(x, y, u) + b.eval(x, y, u),
            Expr::Sub(a, b) => a.eval(x, y, u) - b.eval(x, y, u),
            Expr::Mul(a, b) => a.eval(x, y, u) * b.eval(x, y, u),
            Expr::Div(a, b) => a.eval(x, y, u) / b.eval(x, y, u),
            Expr::Neg(a) => -a.eval(x, y, u),
            Expr::Pow(a, n) => a.eval(x, y, u).powi(*n as i32),
            Expr::Sin(a) => a.eval(x, y, u).sin(),
            Expr::Cos(a) => a.eval(x, y, u).cos(),
            Expr::Tanh(a) => a.eval(x, y, u).tanh(),
            Expr::Exp(a) => clamped_exp(a.eval(x, y, u)),
        }
    }

    /// Symbolic partial derivative in the state variable y.
    pub fn dy(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) | X | U => Const(0.0),
            Y => Const(1.0),
            Add(a, b) => simplify(Add(Box::new(a.dy()), Box::new(b.dy()))),
            Sub(a, b) => simplify(Sub(Box::new(a.dy()), Box::new(b.dy()))),
            Mul(a, b) => simplify(Add(
                Box::new(simplify(Mul(Box::new(a.dy()), b.clone()))),
                Box::new(simplify(Mul(a.clone(), Box::new(b.dy())))),
            )),
            Div(a, b) => {
                // (a/b)' = a'/b - a b'/b^2
                let t1 = simplify(Div(Box::new(a.dy()), b.clone()));
                let t2 = simplify(Div(
                    Box::new(simplify(Mul(a.clone(), Box::new(b.dy())))),
                    Box::new(Pow(b.clone(), 2)),
                ));
                simplify(Sub(Box::new(t1), Box::new(t2)))
            }
            Neg(a) => simplify(Neg(Box::new(a.dy()))),
            Pow(a, n) => {
                if *n == 0 {
                    Const(0.0)
                } else {
                    let inner = simplify(Mul(
                        Box::new(Const(*n as f64)),
                        Box::new(Pow(a.clone(), n - 1)),
                    ));
                    simplify(Mul(Box::new(inner), Box::new(a.dy())))
                }
            }
            Sin(a) => simplify(Mul(Box::new(Cos(a.clone())), Box::new(a.dy()))),
            Cos(a) => simplify(Neg(Box::new(simplify(Mul(
                Box::new(Sin(a.clone())),
                Box::new(a.dy()),
            ))))),
            Tanh(a) => {
                // tanh' = 1 - tanh^2
                let sech2 = simplify(Sub(
                    Box::new(Const(1.0)),
                    Box::new(Pow(Box::new(Tanh(a.clone())), 2)),
                ));
                simplify(Mul(Box::new(sech2), Box::new(a.dy())))
            }
            Exp(a) => simplify(Mul(Box::new(Exp(a.clone())), Box::new(a.dy()))),
        }
    }

    pub fn compile(&self) -> CompiledExpr {
        let mut ops = Vec::new();
        emit(self, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            depth = depth + 1 - op.arity();
            max_depth = max_depth.max(depth);
        }
        assert!(max_depth <= STACK_CAP, "expression too deep");
        CompiledExpr { ops }
    }
}

fn simplify(e: Expr) -> Expr {
    use Expr::*;
    match e {
        Add(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x + y),
            (Const(c), rhs) if c == 0.0 => rhs,
            (lhs, Const(c)) if c == 0.0 => lhs,
            (lhs, rhs) => Add(Box::new(lhs), Box::new(rhs)),
        },
        Sub(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x - y),
            (lhs, Const(c)) if c == 0.0 => lhs,
            (Const(c), rhs) if c == 0.0 => simplify(Neg(Box::new(rhs))),
            (lhs, rhs) => Sub(Box::new(lhs), Box::new(rhs)),
        },
        Mul(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x * y),
            (Const(c), _) | (_, Const(c)) if c == 0.0 => Const(0.0),
            (Const(c), rhs) if c == 1.0 => rhs,
            (lhs, Const(c)) if c == 1.0 => lhs,
            (lhs, rhs) => Mul(Box::new(lhs), Box::new(rhs)),
        },
        Div(a, b) => match (*a, *b) {
            (Const(c), rhs) if c == 0.0 => {
                let _ = rhs;
                Const(0.0)
            }
            (lhs, Const(c)) if c == 1.0 => lhs,
            (Const(x), Const(y)) if y != 0.0 => Const(x / y),
            (lhs, rhs) => Div(Box::new(lhs), Box::new(rhs)),
        },
        Neg(a) => match *a {
            Const(x) => Const(-x),
            Neg(inner) => *inner,
            other => Neg(Box::new(other)),
        },
        Pow(a, n) => match (n, *a) {
            (0, _) => Const(1.0),
            (1, inner) => inner,
            (n, Const(x)) => Const(x.powi(n as i32)),
            (n, inner) => Pow(Box::new(inner), n),
        },
        other => other,
    }
}

const STACK_CAP: usize = 32;

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    X,
    Y,
    U,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Powi(i32),
    Sin,
    Cos,
    Tanh,
    Exp,
}

impl Op {
    fn arity(&self) -> usize {
        match self {
            Op::Const(_) | Op::X | Op::Y | Op::U => 0,
            Op::Neg | Op::Powi(_) | Op::Sin | Op::Cos | Op::Tanh | Op::Exp => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
        }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::X => ops.push(Op::X),
        Expr::Y => ops.push(Op::Y),
        Expr::U => ops.push(Op::U),
        Expr::Add(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Add);
        }
        Expr::Sub(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Sub);
        }
        Expr::Mul(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Mul);
        }
        Expr::Div(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(Op::Div);
        }
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Pow(a, n) => {
            emit(a, ops);
            ops.push(Op::Powi(*n as i32));
        }
        Expr::Sin(a) => {
            emit(a, ops);
            ops.push(Op::Sin);
        }
        Expr::Cos(a) => {
            emit(a, ops);
            ops.push(Op::Cos);
        }
        Expr::Tanh(a) => {
            emit(a, ops);
            ops.push(Op::Tanh);
        }
        Expr::Exp(a) => {
            emit(a, ops);
            ops.push(Op::Exp);
        }
    }
}

/// Postfix program evaluated on a fixed-size stack.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    ops: Vec<Op>,
}

impl CompiledExpr {
    pub fn eval(&self, x: f64, y: f64, u: f64) -> f64 {
        let mut stack = [0.0f64; STACK_CAP];
        let mut top = 0usize;
        for op in &self.ops {
            match op {
                Op::Const(c) => {
                    stack[top] = *c;
                    top += 1;
                }
                Op::X => {
                    stack[top] = x;
                    top += 1;
                }
                Op::Y => {
                    stack[top] = y;
                    top += 1;
                }
                Op::U => {
                    stack[top] = u;
                    top += 1;
                }
                Op::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Op::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                Op::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Op::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                Op::Neg => stack[top - 1] = -stack[top - 1],
                Op::Powi(n) => stack[top - 1] = stack[top - 1].powi(*n),
                Op::Sin => stack[top - 1] = stack[top - 1].sin(),
                Op::Cos => stack[top - 1] = stack[top - 1].cos(),
                Op::Tanh => stack[top - 1] = stack[top - 1].tanh(),
                Op::Exp => stack[top - 1] = clamped_exp(stack[top - 1]),
            }
        }
        stack[0]
    }

    /// Evaluate at every node: out[i] = f(xs[i], ys[i], u).
    pub fn eval_into(&self, xs: &[f64], ys: &[f64], u: f64, out: &mut [f64]) {
        for i in 0..xs.len() {
            out[i] = self.eval(xs[i], ys[i], u);
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> Error {
        Error::Invalid(format!("{msg} at byte {} in expression {:?}", self.pos, self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Add(Box::new(acc), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Sub(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Mul(Box::new(acc), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Expr::Div(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let mut base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected unsigned integer exponent"));
            }
            let n: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            base = Expr::Pow(Box::new(base), n);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                match name {
                    "x" => Ok(Expr::X),
                    "y" => Ok(Expr::Y),
                    "u" => Ok(Expr::U),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "sin" | "cos" | "tanh" | "exp" => {
                        self.skip_ws();
                        if self.peek() != Some(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        self.pos += 1;
                        let inner = Box::new(self.expr()?);
                        self.skip_ws();
                        if self.peek() != Some(b')') {
                            return Err(self.err("expected ')'"));
                        }
                        self.pos += 1;
                        Ok(match name {
                            "sin" => Expr::Sin(inner),
                            "cos" => Expr::Cos(inner),
                            "tanh" => Expr::Tanh(inner),
                            _ => Expr::Exp(inner),
                        })
                    }
                    other => Err(self.err(&format!("unknown identifier {other:?}"))),
                }
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos + 1 < self.bytes.len()
                && (self.bytes[self.pos + 1].is_ascii_digit()
                    || self.bytes[self.pos + 1] == b'-'
                    || self.bytes[self.pos + 1] == b'+')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| self.err("malformed number"))
    }
}
