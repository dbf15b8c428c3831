//! Coefficient expressions in `x` and `t`.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' factor)?
//! base   := number | 'x' | 't' | 'pi' | func '(' expr ')' | '(' expr ')' | '-' factor
//! func   := 'sin' | 'cos' | 'exp' | 'sqrt' | 'ln'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)` and `2^-x^2`
//! is `2^(-(x^2))`.

use std::fmt;
use std::sync::Arc;

use shishkin::Field;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "sqrt" => Self::Sqrt,
            "ln" => Self::Ln,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Sqrt => "sqrt",
            Self::Ln => "ln",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
            Self::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprTree {
    Constant(f64),
    Variable(Var),
    Pi,
    Unary(UnaryOp, Box<ExprTree>),
    Binary(BinaryOp, Box<ExprTree>, Box<ExprTree>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("ln of nonpositive value {0}")]
    LnNonPositive(f64),
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("non-finite result")]
    NonFinite,
}

const BASE_START: &[&str] = &["number", "x", "t", "pi", "sin", "cos", "exp", "sqrt", "ln", "(", "-"];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn found(&mut self) -> String {
        match self.peek() {
            Some(c) => format!("'{c}'"),
            None => "end of input".into(),
        }
    }

    fn fail<T>(&mut self, expected: &[&str]) -> Result<T, ParseError> {
        let found = self.found();
        Err(ParseError {
            offset: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&[&c.to_string()])
        }
    }

    fn expr(&mut self) -> Result<ExprTree, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinaryOp::Add,
                Some('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = ExprTree::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ExprTree, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinaryOp::Mul,
                Some('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = ExprTree::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<ExprTree, ParseError> {
        let base = self.base()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(ExprTree::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<ExprTree, ParseError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(ExprTree::Unary(UnaryOp::Neg, Box::new(self.factor()?)))
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => self.fail(BASE_START),
        }
    }

    fn number(&mut self) -> Result<ExprTree, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        // exponent only when followed by digits, so "2e" is rejected below
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        match self.src[start..end].parse::<f64>() {
            Ok(v) => {
                self.pos = end;
                Ok(ExprTree::Constant(v))
            }
            Err(_) => Err(ParseError {
                offset: start,
                expected: vec!["number".into()],
                found: format!("'{}'", &self.src[start..end]),
            }),
        }
    }

    fn identifier(&mut self) -> Result<ExprTree, ParseError> {
        let start = self.pos;
        let end = start
            + self.src[start..]
                .bytes()
                .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                .count();
        let name = &self.src[start..end];
        let node = match name {
            "x" => ExprTree::Variable(Var::X),
            "t" => ExprTree::Variable(Var::T),
            "pi" => ExprTree::Pi,
            _ => match UnaryOp::from_name(name) {
                Some(op) => {
                    self.pos = end;
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(ExprTree::Unary(op, Box::new(arg)));
                }
                None => {
                    return Err(ParseError {
                        offset: start,
                        expected: BASE_START.iter().map(|s| s.to_string()).collect(),
                        found: format!("'{name}'"),
                    })
                }
            },
        };
        self.pos = end;
        Ok(node)
    }
}

pub fn parse_expression(text: &str) -> Result<ExprTree, ParseError> {
    let mut parser = Parser { src: text, pos: 0 };
    let tree = parser.expr()?;
    if parser.peek().is_some() {
        return parser.fail(&["+", "-", "*", "/", "^", "end of input"]);
    }
    Ok(tree)
}

fn checked(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl ExprTree {
    pub fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        match self {
            Self::Constant(v) => Ok(*v),
            Self::Variable(Var::X) => Ok(x),
            Self::Variable(Var::T) => Ok(t),
            Self::Pi => Ok(std::f64::consts::PI),
            Self::Unary(op, arg) => {
                let a = arg.eval(x, t)?;
                checked(match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Sqrt if a < 0.0 => return Err(EvalError::SqrtNegative(a)),
                    UnaryOp::Sqrt => a.sqrt(),
                    UnaryOp::Ln if a <= 0.0 => return Err(EvalError::LnNonPositive(a)),
                    UnaryOp::Ln => a.ln(),
                })
            }
            Self::Binary(op, lhs, rhs) => {
                let (a, b) = (lhs.eval(x, t)?, rhs.eval(x, t)?);
                checked(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                })
            }
        }
    }

    /// Evaluation failures become NaN, which problem validation rejects.
    pub fn into_field(self) -> Field {
        let tree = Arc::new(self);
        Field::new(move |x, t| tree.eval(x, t).unwrap_or(f64::NAN))
    }
}

/// Fully parenthesised form; re-parses to the same tree.
impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => write!(f, "{v:?}"),
            Self::Variable(Var::X) => f.write_str("x"),
            Self::Variable(Var::T) => f.write_str("t"),
            Self::Pi => f.write_str("pi"),
            Self::Unary(UnaryOp::Neg, arg) => write!(f, "(-{arg})"),
            Self::Unary(op, arg) => write!(f, "{}({arg})", op.name()),
            Self::Binary(op, lhs, rhs) => write!(f, "({lhs} {} {rhs})", op.symbol()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(s: &str, x: f64, t: f64) -> f64 {
        parse_expression(s).unwrap().eval(x, t).unwrap()
    }

    #[test]
    fn examples() {
        assert!((eval("sin(pi*x)*exp(-t)", 0.5, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(eval("2 + 3*x", 1.0, 0.0), 5.0);
        let err = parse_expression("2+*x").unwrap_err();
        assert_eq!(err.offset, 2);
        assert!(err.expected.contains(&"number".to_string()));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(eval("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(eval("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(eval("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(eval("2*-x", 3.0, 0.0), -6.0);
        assert_eq!(eval("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(eval("(-2)^2", 0.0, 0.0), 4.0);
        assert_eq!(eval("1.5e2 + .5", 0.0, 0.0), 150.5);
        assert_eq!(eval("(x+t)*2", 1.0, 2.0), 6.0);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_expression("1/x").unwrap().eval(0.0, 0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(
            parse_expression("ln(x)").unwrap().eval(0.0, 0.0),
            Err(EvalError::LnNonPositive(_))
        ));
        assert!(matches!(
            parse_expression("sqrt(x)").unwrap().eval(-1.0, 0.0),
            Err(EvalError::SqrtNegative(_))
        ));
        assert_eq!(parse_expression("foo(x)").unwrap_err().offset, 0);
        assert_eq!(parse_expression("sin x").unwrap_err().offset, 4);
        assert_eq!(parse_expression("(x").unwrap_err().offset, 2);
        assert_eq!(parse_expression("x y").unwrap_err().offset, 2);
        assert_eq!(parse_expression("").unwrap_err().offset, 0);
        assert!(parse_expression("2e").is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["-x^2*sin(pi*t)", "2^3^2", "1-(2-3)", "exp(-t)/(1+x)", "--x"] {
            let tree = parse_expression(s).unwrap();
            assert_eq!(parse_expression(&tree.to_string()).unwrap(), tree);
        }
    }

    #[test]
    fn field_returns_nan_on_error() {
        let f = parse_expression("1/x").unwrap().into_field();
        assert!(f.eval(0.0, 0.0).is_nan());
        assert_eq!(f.eval(2.0, 0.0), 0.5);
    }
}
