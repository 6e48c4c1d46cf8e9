//! Scalar arithmetic expressions in the variables `y` and `z`.
//!
//! Grammar (recursive descent, lowest precedence first):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := NUMBER | 'pi' | 'y' | 'z' | FUNC '(' expr ')' | '(' expr ')'
//! FUNC  := sin | cos | exp | sqrt | abs
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-2^2 = -4`
//! and `2^3^2 = 512`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` takes 1 argument, got {got} (byte {offset})")]
    Arity { offset: usize, name: String, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite value {value} while evaluating `{node}` at (y={y}, z={z})")]
pub struct EvalError {
    pub node: String,
    pub value: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl UnaryOp {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Abs => x.abs(),
        }
    }

    fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Abs => Some("abs"),
        }
    }

    fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }

    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Parser::new(source).parse_all()
    }

    /// Evaluates at `(y, z)`; any non-finite intermediate value is an error.
    pub fn eval(&self, y: f64, z: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::Y) => y,
            Expr::Var(Var::Z) => z,
            Expr::Unary(op, arg) => op.apply(arg.eval(y, z)?),
            Expr::Binary(op, lhs, rhs) => op.apply(lhs.eval(y, z)?, rhs.eval(y, z)?),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError {
                node: self.to_string(),
                value,
                y,
                z,
            })
        }
    }

    /// True when the expression references `var`.
    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Unary(_, arg) => arg.depends_on(var),
            Expr::Binary(_, lhs, rhs) => lhs.depends_on(var) || rhs.depends_on(var),
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

// Fully parenthesised; constants use the shortest round-tripping representation,
// so re-parsing the printed form evaluates bit-for-bit identically.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Var(Var::Z) => f.write_str("z"),
            Expr::Unary(UnaryOp::Neg, arg) => write!(f, "(-{arg})"),
            Expr::Unary(op, arg) => write!(f, "{}({arg})", op.function_name().unwrap_or("?")),
            Expr::Binary(op, lhs, rhs) => write!(f, "({lhs} {} {rhs})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            peeked: None,
        }
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset,
            message: message.into(),
        })
    }

    fn lex(&mut self) -> Result<(usize, Token), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((start, Token::End));
        };
        let token = match c {
            b'0'..=b'9' | b'.' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut exp = end + 1;
                    if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                        exp += 1;
                    }
                    if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                            exp += 1;
                        }
                        end = exp;
                    }
                }
                let text = &self.src[start..end];
                self.pos = end;
                match text.parse::<f64>() {
                    Ok(v) => Token::Number(v),
                    Err(_) => return self.syntax(start, format!("malformed number `{text}`")),
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                self.pos = end;
                Token::Ident(self.src[start..end].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b',' => {
                self.pos += 1;
                Token::Comma
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return self.syntax(start, format!("unexpected character `{ch}`"));
            }
        };
        Ok((start, token))
    }

    fn peek(&mut self) -> Result<&(usize, Token), ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(self.peeked.as_ref().expect("just filled"))
    }

    fn next(&mut self) -> Result<(usize, Token), ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        match self.next()? {
            (_, Token::End) => Ok(e),
            (offset, tok) => self.syntax(offset, format!("unexpected trailing {tok:?}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek()?.1 {
                Token::Op('+') => BinaryOp::Add,
                Token::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.next()?;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek()?.1 {
                Token::Op('*') => BinaryOp::Mul,
                Token::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.next()?;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek()?.1 {
            Token::Op('-') => {
                self.next()?;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Token::Op('+') => {
                self.next()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek()?.1 == Token::Op('^') {
            self.next()?;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (offset, token) = self.next()?;
        match token {
            Token::Number(v) => Ok(Expr::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "y" => Ok(Expr::Var(Var::Y)),
                "z" => Ok(Expr::Var(Var::Z)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                _ => match UnaryOp::from_function_name(&name) {
                    Some(op) => self.call(offset, name, op),
                    None => Err(ParseError::UnknownIdentifier { offset, name }),
                },
            },
            Token::End => self.syntax(offset, "unexpected end of input"),
            other => self.syntax(offset, format!("unexpected {other:?}")),
        }
    }

    fn call(&mut self, offset: usize, name: String, op: UnaryOp) -> Result<Expr, ParseError> {
        match self.next()? {
            (_, Token::LParen) => {}
            (at, _) => return self.syntax(at, format!("expected `(` after `{name}`")),
        }
        if self.peek()?.1 == Token::RParen {
            return Err(ParseError::Arity { offset, name, got: 0 });
        }
        let mut args = vec![self.expr()?];
        while self.peek()?.1 == Token::Comma {
            self.next()?;
            args.push(self.expr()?);
        }
        self.expect_rparen()?;
        if args.len() != 1 {
            return Err(ParseError::Arity {
                offset,
                name,
                got: args.len(),
            });
        }
        let arg = args.pop().expect("one argument");
        Ok(Expr::Unary(op, Box::new(arg)))
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.next()? {
            (_, Token::RParen) => Ok(()),
            (at, tok) => self.syntax(at, format!("expected `)`, found {tok:?}")),
        }
    }
}
