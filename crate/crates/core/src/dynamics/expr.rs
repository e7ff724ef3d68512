//! Expression language for system definitions.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-')? atom ('^' integer)?
//! atom   := number | ident | func '(' expr (',' expr)? ')' | '(' expr ')'
//! ident  := 'x'digit+ | 'u'digit+
//! ```
//!
//! Variables are 1-based (`x1` is the first state component).

use std::fmt;

use crate::error::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func1 {
    Sin,
    Cos,
    Tanh,
    Exp,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree. Variable indices are stored 0-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Input(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call1(Func1, Box<Expr>),
    Call2(Func2, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Input(i) => u[*i],
            Expr::Neg(e) => -e.eval(x, u),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x, u), b.eval(x, u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(e, k) => e.eval(x, u).powi(*k),
            Expr::Call1(f, e) => {
                let v = e.eval(x, u);
                match f {
                    Func1::Sin => v.sin(),
                    Func1::Cos => v.cos(),
                    Func1::Tanh => v.tanh(),
                    Func1::Exp => v.exp(),
                    Func1::Abs => v.abs(),
                }
            }
            Expr::Call2(f, a, b) => {
                let (a, b) = (a.eval(x, u), b.eval(x, u));
                match f {
                    Func2::Min => a.min(b),
                    Func2::Max => a.max(b),
                }
            }
        }
    }

    /// Largest 1-based (state, input) variable index referenced, 0 if none.
    pub fn max_indices(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::State(i) => (i + 1, 0),
            Expr::Input(i) => (0, i + 1),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call1(_, e) => e.max_indices(),
            Expr::Binary(_, a, b) | Expr::Call2(_, a, b) => {
                let (a, b) = (a.max_indices(), b.max_indices());
                (a.0.max(b.0), a.1.max(b.1))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Input(i) => write!(f, "u{}", i + 1),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
            Expr::Call1(func, e) => {
                let name = match func {
                    Func1::Sin => "sin",
                    Func1::Cos => "cos",
                    Func1::Tanh => "tanh",
                    Func1::Exp => "exp",
                    Func1::Abs => "abs",
                };
                write!(f, "{name}({e})")
            }
            Expr::Call2(func, a, b) => {
                let name = match func {
                    Func2::Min => "min",
                    Func2::Max => "max",
                };
                write!(f, "{name}({a}, {b})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, (usize, String)> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_whitespace() {
                lx.pos += 1;
            }
            let start = lx.pos;
            let Some(&c) = lx.src.get(lx.pos) else {
                out.push((Tok::End, start));
                return Ok(out);
            };
            let tok = match c {
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'^' => Tok::Caret,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                b'0'..=b'9' | b'.' => {
                    out.push((lx.number()?, start));
                    continue;
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while lx
                        .src
                        .get(lx.pos)
                        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                    {
                        lx.pos += 1;
                    }
                    let word = std::str::from_utf8(&lx.src[start..lx.pos]).unwrap();
                    out.push((Tok::Ident(word.to_string()), start));
                    continue;
                }
                other => return Err((start, format!("unexpected character `{}`", other as char))),
            };
            lx.pos += 1;
            out.push((tok, start));
        }
    }

    fn number(&mut self) -> Result<Tok, (usize, String)> {
        let start = self.pos;
        let digits = |lx: &mut Self| {
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
        };
        digits(self);
        let mut integral = true;
        if self.src.get(self.pos) == Some(&b'.') {
            integral = false;
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                integral = false;
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if integral {
            if let Ok(i) = text.parse::<i64>() {
                return Ok(Tok::Int(i));
            }
        }
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| (start, format!("malformed number `{text}`")))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dims: Option<(usize, usize)>,
}

type PResult<T> = Result<T, (usize, String)>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err((self.offset(), format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let negate = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let mut e = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let at = self.offset();
            let sign = if *self.peek() == Tok::Minus {
                self.bump();
                -1
            } else {
                1
            };
            match self.bump() {
                Tok::Int(k) => {
                    let k = i32::try_from(k * sign)
                        .map_err(|_| (at, "exponent out of range".to_string()))?;
                    e = Expr::Pow(Box::new(e), k);
                }
                _ => return Err((at, "exponent must be an integer literal".into())),
            }
        }
        Ok(if negate { Expr::Neg(Box::new(e)) } else { e })
    }

    fn atom(&mut self) -> PResult<Expr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Int(i) => Ok(Expr::Const(i as f64)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(&name, at),
            Tok::End => Err((at, "unexpected end of expression".into())),
            t => Err((at, format!("unexpected token {t:?}"))),
        }
    }

    fn ident(&mut self, name: &str, at: usize) -> PResult<Expr> {
        let func1 = match name {
            "sin" => Some(Func1::Sin),
            "cos" => Some(Func1::Cos),
            "tanh" => Some(Func1::Tanh),
            "exp" => Some(Func1::Exp),
            "abs" => Some(Func1::Abs),
            _ => None,
        };
        let func2 = match name {
            "min" => Some(Func2::Min),
            "max" => Some(Func2::Max),
            _ => None,
        };
        if func1.is_some() || func2.is_some() {
            self.expect(Tok::LParen, "`(` after function name")?;
            let a = self.expr()?;
            let e = if let Some(f) = func1 {
                Expr::Call1(f, Box::new(a))
            } else {
                self.expect(Tok::Comma, "`,` (function takes two arguments)")?;
                let b = self.expr()?;
                Expr::Call2(func2.unwrap(), Box::new(a), Box::new(b))
            };
            self.expect(Tok::RParen, "`)`")?;
            return Ok(e);
        }
        let (kind, digits) = name.split_at(1);
        let index = match (kind, digits.parse::<usize>()) {
            ("x" | "u", Ok(i)) if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => i,
            _ => return Err((at, format!("unknown identifier `{name}`"))),
        };
        if index == 0 {
            return Err((at, format!("variable `{name}`: indices start at 1")));
        }
        if let Some((n, m)) = self.dims {
            let limit = if kind == "x" { n } else { m };
            if index > limit {
                return Err((
                    at,
                    format!("variable `{name}` exceeds declared dimension {limit}"),
                ));
            }
        }
        Ok(if kind == "x" {
            Expr::State(index - 1)
        } else {
            Expr::Input(index - 1)
        })
    }
}

/// Parses one expression. When `dims = Some((n, m))`, variable references
/// beyond those dimensions are rejected. Errors carry `line` and a 1-based
/// column offset by `column_base`.
pub fn parse_expr(
    src: &str,
    dims: Option<(usize, usize)>,
    line: usize,
    column_base: usize,
) -> Result<Expr, ParseError> {
    let err = |(off, message): (usize, String)| ParseError {
        line,
        column: column_base + src[..off.min(src.len())].chars().count() + 1,
        message,
    };
    let toks = Lexer::tokens(src).map_err(err)?;
    let mut p = Parser { toks, pos: 0, dims };
    let e = p.expr().map_err(err)?;
    if *p.peek() != Tok::End {
        return Err(err((p.offset(), format!("unexpected trailing {:?}", p.peek()))));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64], u: &[f64]) -> f64 {
        parse_expr(src, None, 1, 0).unwrap().eval(x, u)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(eval("10 - 3 - 2", &[], &[]), 5.0);
        assert_eq!(eval("-x1^2", &[3.0], &[]), -9.0);
        assert_eq!(eval("(1 + x1)^2", &[2.0], &[]), 9.0);
        assert_eq!(eval("x1^-1", &[4.0], &[]), 0.25);
    }

    #[test]
    fn functions() {
        assert_eq!(eval("min(x1, u1) + max(x1, u1)", &[1.0], &[-2.0]), -1.0);
        assert_eq!(eval("abs(-2.5)", &[], &[]), 2.5);
        assert!((eval("sin(x1)^2 + cos(x1)^2", &[0.3], &[]) - 1.0).abs() < 1e-15);
        assert_eq!(eval("tanh(0) + exp(0)", &[], &[]), 1.0);
    }

    #[test]
    fn numbers() {
        assert_eq!(eval("1.5e2", &[], &[]), 150.0);
        assert_eq!(eval(".5", &[], &[]), 0.5);
        assert_eq!(eval("2E-1", &[], &[]), 0.2);
    }

    #[test]
    fn error_columns() {
        let e = parse_expr("x1 + y2", None, 3, 0).unwrap_err();
        assert_eq!((e.line, e.column), (3, 6));
        let e = parse_expr("x1 + ", None, 1, 0).unwrap_err();
        assert_eq!(e.column, 6);
        let e = parse_expr("x1 ^ 1.5", None, 1, 0).unwrap_err();
        assert!(e.message.contains("integer"), "{e}");
        let e = parse_expr("x3", Some((2, 1)), 1, 5).unwrap_err();
        assert_eq!(e.column, 6);
        assert!(parse_expr("x0", None, 1, 0).is_err());
        assert!(parse_expr("min(x1)", None, 1, 0).is_err());
        assert!(parse_expr("x1 x2", None, 1, 0).is_err());
        assert!(parse_expr("--x1", None, 1, 0).is_err());
    }

    #[test]
    fn max_indices() {
        let e = parse_expr("x2 * u3 + sin(x1)", None, 1, 0).unwrap();
        assert_eq!(e.max_indices(), (2, 3));
    }

    #[test]
    fn display_reparses_to_same_value() {
        let e = parse_expr("-x1^3 / (2 - u1) + max(x1, -u1)", None, 1, 0).unwrap();
        let again = parse_expr(&e.to_string(), None, 1, 0).unwrap();
        for &(x, u) in &[(0.3, 0.1), (-0.7, 0.9), (1.0, -1.0)] {
            assert_eq!(e.eval(&[x], &[u]), again.eval(&[x], &[u]));
        }
    }
}
