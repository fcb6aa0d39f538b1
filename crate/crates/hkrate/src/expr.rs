//! Tiny arithmetic expression language in one variable `t`, evaluated in
//! sign/log-magnitude form so that `exp(-t)` at `t = 1e300` is a number.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, decimal numbers, the
//! variable `t`, and the functions `ln`, `log` (natural), `exp`, `sqrt`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character `{ch}` at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token at offset {0}")]
    UnexpectedToken(usize),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

/// A real number stored as `sign * exp(m)`; zero has sign 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNum {
    pub sign: i8,
    pub m: f64,
}

impl LogNum {
    pub const ZERO: LogNum = LogNum {
        sign: 0,
        m: f64::NEG_INFINITY,
    };
    pub const NAN: LogNum = LogNum { sign: 1, m: f64::NAN };

    pub fn from_real(x: f64) -> Self {
        if x.is_nan() {
            LogNum::NAN
        } else if x == 0.0 {
            LogNum::ZERO
        } else {
            LogNum {
                sign: if x > 0.0 { 1 } else { -1 },
                m: x.abs().ln(),
            }
        }
    }

    pub fn positive_ln(m: f64) -> Self {
        if m == f64::NEG_INFINITY {
            LogNum::ZERO
        } else {
            LogNum { sign: 1, m }
        }
    }

    pub fn real(self) -> f64 {
        f64::from(self.sign) * self.m.exp()
    }

    pub fn is_nan(self) -> bool {
        self.m.is_nan()
    }

    fn neg(self) -> Self {
        LogNum {
            sign: -self.sign,
            m: self.m,
        }
    }

    fn add(self, o: LogNum) -> Self {
        if self.is_nan() || o.is_nan() {
            return LogNum::NAN;
        }
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        let (big, small) = if self.m >= o.m { (self, o) } else { (o, self) };
        if big.m == f64::INFINITY {
            if small.m == f64::INFINITY && small.sign != big.sign {
                return LogNum::NAN;
            }
            return big;
        }
        let d = (small.m - big.m).exp();
        if big.sign == small.sign {
            LogNum {
                sign: big.sign,
                m: big.m + d.ln_1p(),
            }
        } else if d >= 1.0 {
            LogNum::ZERO
        } else {
            LogNum {
                sign: big.sign,
                m: big.m + (-d).ln_1p(),
            }
        }
    }

    fn mul(self, o: LogNum) -> Self {
        if self.is_nan() || o.is_nan() {
            return LogNum::NAN;
        }
        if self.sign == 0 || o.sign == 0 {
            return LogNum::ZERO;
        }
        LogNum {
            sign: self.sign * o.sign,
            m: self.m + o.m,
        }
    }

    fn div(self, o: LogNum) -> Self {
        if self.is_nan() || o.is_nan() || o.sign == 0 {
            return LogNum::NAN;
        }
        if self.sign == 0 {
            return LogNum::ZERO;
        }
        LogNum {
            sign: self.sign * o.sign,
            m: self.m - o.m,
        }
    }

    fn pow(self, e: LogNum) -> Self {
        if self.is_nan() || e.is_nan() {
            return LogNum::NAN;
        }
        let ev = e.real();
        match self.sign {
            0 => {
                if ev > 0.0 {
                    LogNum::ZERO
                } else {
                    LogNum::NAN
                }
            }
            1 => LogNum::positive_ln(ev * self.m),
            _ => {
                // exponents pass through exp(ln |e|), so snap near-integers
                let ev = if (ev - ev.round()).abs() < 1e-9 { ev.round() } else { ev };
                if ev.fract() != 0.0 {
                    return LogNum::NAN;
                }
                let odd = (ev % 2.0).abs() == 1.0;
                LogNum {
                    sign: if odd { -1 } else { 1 },
                    m: ev * self.m,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Ln,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    T,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // exponent suffix such as 1e-3
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            let text = &src[chars[start].0..end];
            let v = text
                .parse::<f64>()
                .map_err(|_| ExprError::UnexpectedToken(pos))?;
            out.push((Tok::Num(v), pos));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_alphanumeric() {
                i += 1;
            }
            let end = if i < chars.len() { chars[i].0 } else { src.len() };
            out.push((Tok::Ident(src[chars[start].0..end].to_string()), pos));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), pos));
            i += 1;
        } else {
            return Err(ExprError::UnexpectedChar { ch: c, pos });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.1).unwrap_or(usize::MAX)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let pos = self.pos();
        let tok = self.peek().cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err_here());
                }
                Ok(e)
            }
            Tok::Ident(name) if name == "t" => Ok(Node::T),
            Tok::Ident(name) => {
                let f = match name.as_str() {
                    "ln" | "log" => Func::Ln,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    _ => return Err(ExprError::UnknownFunction(name)),
                };
                if !self.eat('(') {
                    return Err(self.err_here());
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err_here());
                }
                Ok(Node::Call(f, Box::new(arg)))
            }
            Tok::Op(_) => Err(ExprError::UnexpectedToken(pos)),
        }
    }

    fn err_here(&self) -> ExprError {
        if self.at >= self.toks.len() {
            ExprError::UnexpectedEnd
        } else {
            ExprError::UnexpectedToken(self.pos())
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            toks: lex(src)?,
            at: 0,
        };
        let root = p.expr()?;
        if p.at != p.toks.len() {
            return Err(ExprError::UnexpectedToken(p.pos()));
        }
        Ok(Expr {
            root,
            source: src.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with `t` given as a [`LogNum`].
    pub fn eval_log(&self, t: LogNum) -> LogNum {
        eval(&self.root, t)
    }

    /// Evaluates at a positive `t` given by `ln t`.
    pub fn eval_ln_t(&self, ln_t: f64) -> LogNum {
        self.eval_log(LogNum::positive_ln(ln_t))
    }

    /// Plain real evaluation.
    pub fn eval_real(&self, t: f64) -> f64 {
        self.eval_log(LogNum::from_real(t)).real()
    }
}

fn eval(n: &Node, t: LogNum) -> LogNum {
    match n {
        Node::Num(v) => LogNum::from_real(*v),
        Node::T => t,
        Node::Neg(a) => eval(a, t).neg(),
        Node::Add(a, b) => eval(a, t).add(eval(b, t)),
        Node::Sub(a, b) => eval(a, t).add(eval(b, t).neg()),
        Node::Mul(a, b) => eval(a, t).mul(eval(b, t)),
        Node::Div(a, b) => eval(a, t).div(eval(b, t)),
        Node::Pow(a, b) => eval(a, t).pow(eval(b, t)),
        Node::Call(f, a) => {
            let x = eval(a, t);
            if x.is_nan() {
                return LogNum::NAN;
            }
            match f {
                Func::Ln => {
                    if x.sign <= 0 {
                        LogNum::NAN
                    } else {
                        LogNum::from_real(x.m)
                    }
                }
                Func::Exp => LogNum::positive_ln(x.real()),
                Func::Sqrt => match x.sign {
                    0 => LogNum::ZERO,
                    1 => LogNum { sign: 1, m: 0.5 * x.m },
                    _ => LogNum::NAN,
                },
            }
        }
    }
}
