//! Arithmetic expressions over `x`, `y` (or `x1 .. xk`) for user-defined
//! objectives.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            right-associative
//! atom   := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Gradients of parsed objectives are central finite differences.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::objectives::Objective;
use crate::types::BlockPartition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unrecognized character at position {position}")]
    LexError { position: usize },

    #[error("parse error at position {position}: expected {expectation}")]
    ParseError { position: usize, expectation: String },

    #[error("unknown function `{name}` at position {position}")]
    UnknownFunction { name: String, position: usize },

    #[error("`{name}` at position {position} takes {expected} argument(s), got {got}")]
    ArityError {
        name: String,
        expected: usize,
        got: usize,
        position: usize,
    },

    #[error("variable `{0}` is not assigned")]
    UnboundVariable(String),

    #[error("expression evaluated to a non-finite value")]
    NonFinite,

    #[error("expression needs {needed} coordinates but the partition has {available}")]
    DimensionMismatch { needed: usize, available: usize },
}

impl ExprError {
    /// Byte offset the error points at, when it has one.
    pub fn position(&self) -> Option<usize> {
        match self {
            Self::LexError { position }
            | Self::ParseError { position, .. }
            | Self::UnknownFunction { position, .. }
            | Self::ArityError { position, .. } => Some(*position),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, ExprError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Number,
    Identifier,
    Operator,
    LParen,
    RParen,
    Comma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub position: usize,
}

impl Token {
    fn end(&self) -> usize {
        self.position + self.text.len()
    }
}

pub fn tokenize(input: &str) -> Result<Vec<Token>> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Operator
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i).ok_or(ExprError::LexError { position: start })?;
                TokenKind::Number
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Identifier
            }
            _ => return Err(ExprError::LexError { position: start }),
        };
        tokens.push(Token {
            kind,
            text: input[start..i].to_string(),
            position: start,
        });
    }
    Ok(tokens)
}

/// End of the decimal literal starting at `i`, or `None` if malformed.
fn scan_number(bytes: &[u8], mut i: usize) -> Option<usize> {
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - s
    };
    let mut n = digits(&mut i);
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        n += digits(&mut i);
    }
    if n == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if digits(&mut j) == 0 {
            return None;
        }
        i = j;
    }
    Some(i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Max,
    Min,
    Relu,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "log" => Self::Log,
            "abs" => Self::Abs,
            "sqrt" => Self::Sqrt,
            "max" => Self::Max,
            "min" => Self::Min,
            "relu" => Self::Relu,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Self::Max | Self::Min => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Abs => "abs",
            Self::Sqrt => "sqrt",
            Self::Max => "max",
            Self::Min => "min",
            Self::Relu => "relu",
        }
    }

    fn apply(self, args: &[f64]) -> f64 {
        let a = args[0];
        match self {
            Self::Sin => a.sin(),
            Self::Cos => a.cos(),
            Self::Exp => a.exp(),
            Self::Log if a <= 0.0 => f64::NAN,
            Self::Log => a.ln(),
            Self::Abs => a.abs(),
            Self::Sqrt => a.sqrt(),
            Self::Max => a.max(args[1]),
            Self::Min => a.min(args[1]),
            Self::Relu => a.max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Constant(f64),
    /// `index` is the flat coordinate: `x -> 0`, `y -> 1`, `xi -> i - 1`.
    Variable { name: String, index: usize },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "{c}"),
            Self::Variable { name, .. } => write!(f, "{name}"),
            Self::Neg(e) => write!(f, "(-{e})"),
            Self::Binary(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {sym} {r})")
            }
            Self::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" => Some(1),
        _ => {
            let digits = name.strip_prefix('x')?;
            if digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            digits.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1)
        }
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn error(&self, expectation: &str) -> ExprError {
        ExprError::ParseError {
            position: self.position(),
            expectation: expectation.to_string(),
        }
    }

    fn eat_op(&mut self, ops: &[&str]) -> Option<&'a str> {
        let t = self.peek()?;
        if t.kind == TokenKind::Operator && ops.contains(&t.text.as_str()) {
            self.pos += 1;
            Some(t.text.as_str())
        } else {
            None
        }
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek().is_some_and(|t| t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.term()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op(&["^"]).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek() else {
            return Err(self.error("a number, variable, function call or '('"));
        };
        match tok.kind {
            TokenKind::Number => {
                self.pos += 1;
                let v = tok.text.parse::<f64>().map_err(|_| ExprError::ParseError {
                    position: tok.position,
                    expectation: "a decimal literal".into(),
                })?;
                Ok(Expr::Constant(v))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(TokenKind::RParen) {
                    return Err(self.error("')'"));
                }
                Ok(inner)
            }
            TokenKind::Identifier => {
                self.pos += 1;
                if self.peek().is_some_and(|t| t.kind == TokenKind::LParen) {
                    return self.call(tok);
                }
                match variable_index(&tok.text) {
                    Some(index) => Ok(Expr::Variable {
                        name: tok.text.clone(),
                        index,
                    }),
                    None => Err(ExprError::ParseError {
                        position: tok.position,
                        expectation: "a variable named x, y or x1..xk".into(),
                    }),
                }
            }
            _ => Err(self.error("a number, variable, function call or '('")),
        }
    }

    fn call(&mut self, name: &Token) -> Result<Expr> {
        let func = Func::lookup(&name.text).ok_or_else(|| ExprError::UnknownFunction {
            name: name.text.clone(),
            position: name.position,
        })?;
        self.pos += 1; // '('
        let mut args = vec![self.expr()?];
        while self.eat(TokenKind::Comma) {
            args.push(self.expr()?);
        }
        if !self.eat(TokenKind::RParen) {
            return Err(self.error("',' or ')'"));
        }
        if args.len() != func.arity() {
            return Err(ExprError::ArityError {
                name: name.text.clone(),
                expected: func.arity(),
                got: args.len(),
                position: name.position,
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses a token stream; the whole stream must be consumed.
pub fn parse(tokens: &[Token]) -> Result<Expr> {
    let end = tokens.last().map_or(0, Token::end);
    let mut p = Parser {
        tokens,
        pos: 0,
        end,
    };
    let e = p.expr()?;
    if p.pos != tokens.len() {
        return Err(p.error("an operator or end of input"));
    }
    Ok(e)
}

/// `parse(tokenize(input))`, with end-of-input errors pointing at `input.len()`.
pub fn parse_str(input: &str) -> Result<Expr> {
    let tokens = tokenize(input)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
        end: input.len(),
    };
    let e = p.expr()?;
    if p.pos != tokens.len() {
        return Err(p.error("an operator or end of input"));
    }
    Ok(e)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite)
    }
}

impl Expr {
    /// Evaluates with variables looked up by name.
    pub fn eval(&self, assignment: &HashMap<String, f64>) -> Result<f64> {
        self.eval_by(&|name: &str, _| {
            assignment
                .get(name)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(name.to_string()))
        })
    }

    /// Evaluates with variables read from flat coordinates.
    pub fn eval_at(&self, z: &[f64]) -> Result<f64> {
        self.eval_by(&|name: &str, index| {
            z.get(index)
                .copied()
                .ok_or_else(|| ExprError::UnboundVariable(name.to_string()))
        })
    }

    fn eval_by(&self, var: &dyn Fn(&str, usize) -> Result<f64>) -> Result<f64> {
        let v = match self {
            Self::Constant(c) => *c,
            Self::Variable { name, index } => var(name, *index)?,
            Self::Neg(e) => -e.eval_by(var)?,
            Self::Binary(op, l, r) => {
                let (a, b) = (l.eval_by(var)?, r.eval_by(var)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Self::Call(func, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval_by(var))
                    .collect::<Result<Vec<_>>>()?;
                func.apply(&vals)
            }
        };
        finite(v)
    }

    /// Distinct variables in first-appearance order.
    pub fn variables(&self) -> Vec<(String, usize)> {
        fn walk(e: &Expr, out: &mut Vec<(String, usize)>) {
            match e {
                Expr::Constant(_) => {}
                Expr::Variable { name, index } => {
                    if !out.iter().any(|(n, _)| n == name) {
                        out.push((name.clone(), *index));
                    }
                }
                Expr::Neg(e) => walk(e, out),
                Expr::Binary(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Objective whose value is `e` and whose gradient is a central finite
/// difference with step `fd_step`. Evaluation errors surface as NaN.
pub fn to_objective(
    e: &Expr,
    partition: BlockPartition,
    fd_step: f64,
) -> std::result::Result<Objective, crate::Error> {
    let vars = e.variables();
    let named_xy = vars.iter().any(|(n, _)| n == "x" || n == "y");
    let indexed = vars.iter().any(|(n, _)| n != "x" && n != "y");
    if named_xy && indexed {
        return Err(crate::Error::InvalidParameter {
            name: "expr".into(),
            reason: "mixes x/y with x1..xk variable names".into(),
        });
    }
    let needed = vars.iter().map(|(_, i)| i + 1).max().unwrap_or(0);
    let available = partition.total_dim();
    if needed > available {
        return Err(ExprError::DimensionMismatch { needed, available }.into());
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(crate::Error::InvalidParameter {
            name: "fd_step".into(),
            reason: format!("{fd_step} must be positive"),
        });
    }
    let value_expr = e.clone();
    let grad_expr = e.clone();
    Ok(Objective::new(
        format!("expr:{e}"),
        partition,
        move |z| value_expr.eval_at(z).unwrap_or(f64::NAN),
        move |z| {
            let mut probe = z.to_vec();
            (0..z.len())
                .map(|j| {
                    probe[j] = z[j] + fd_step;
                    let plus = grad_expr.eval_at(&probe);
                    probe[j] = z[j] - fd_step;
                    let minus = grad_expr.eval_at(&probe);
                    probe[j] = z[j];
                    match (plus, minus) {
                        (Ok(p), Ok(m)) => (p - m) / (2.0 * fd_step),
                        _ => f64::NAN,
                    }
                })
                .collect()
        },
    ))
}
