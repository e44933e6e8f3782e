//! A small expression language for one-dimensional right-hand sides.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | VAR | func '(' expr ')' | '(' expr ')'
//! func   := exp | log | sin | cos | sqrt
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`. There is no implicit
//! multiplication. `log` is the natural logarithm. The variable is `x` by
//! default; threshold expressions use `eps`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Expression tree over a single variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset}: {message} (expected {})", expected.join(", "))]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("`{subexpr}` is undefined at {var} = {at}: {reason}")]
pub struct DomainError {
    pub subexpr: String,
    pub var: String,
    pub at: f64,
    pub reason: &'static str,
}

/// Parses an expression in the variable `x`.
pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    parse_in(text, "x")
}

/// Parses an expression in the named variable.
pub fn parse_in(text: &str, var: &str) -> Result<Expr, SyntaxError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        var,
        len: text.len(),
    };
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(SyntaxError {
            offset: t.offset,
            message: format!("unexpected {}", t.kind.describe()),
            expected: vec!["operator".into(), "end of input".into()],
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when digits follow, so `2e` is `2` then `e`
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| SyntaxError {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                    expected: vec!["number".into()],
                })?;
                out.push(Token {
                    kind: TokenKind::Num(v),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(SyntaxError {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                    expected: vec!["number".into(), "identifier".into(), "operator".into()],
                });
            }
        };
        i += 1;
        out.push(Token {
            kind,
            offset: start,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    var: &'a str,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at(&self, kind: &TokenKind) -> bool {
        self.peek().is_some_and(|t| &t.kind == kind)
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            if self.at(&TokenKind::Plus) {
                self.bump();
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.at(&TokenKind::Minus) {
                self.bump();
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            if self.at(&TokenKind::Star) {
                self.bump();
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.at(&TokenKind::Slash) {
                self.bump();
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.at(&TokenKind::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.atom()?;
        if self.at(&TokenKind::Caret) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let operand = || {
            vec![
                "number".to_string(),
                "variable".to_string(),
                "function".to_string(),
                "`(`".to_string(),
            ]
        };
        let Some(tok) = self.bump() else {
            return Err(SyntaxError {
                offset: self.len,
                message: "unexpected end of input".into(),
                expected: operand(),
            });
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            TokenKind::Ident(ref name) if name == self.var => Ok(Expr::Var),
            TokenKind::Ident(ref name) => match Func::from_name(name) {
                Some(f) => {
                    if !self.at(&TokenKind::LParen) {
                        let offset = self.peek().map_or(self.len, |t| t.offset);
                        return Err(SyntaxError {
                            offset,
                            message: format!("function `{name}` needs an argument"),
                            expected: vec!["`(`".into()],
                        });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                None => Err(SyntaxError {
                    offset: tok.offset,
                    message: format!("unknown identifier `{name}`"),
                    expected: vec![format!("variable `{}`", self.var), "function".into()],
                }),
            },
            other => Err(SyntaxError {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
                expected: operand(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), SyntaxError> {
        match self.bump() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(t) => Err(SyntaxError {
                offset: t.offset,
                message: format!("unexpected {}", t.kind.describe()),
                expected: vec!["`)`".into()],
            }),
            None => Err(SyntaxError {
                offset: self.len,
                message: "unclosed parenthesis".into(),
                expected: vec!["`)`".into()],
            }),
        }
    }
}

impl Expr {
    /// Evaluates at `x`.
    pub fn eval(&self, x: f64) -> Result<f64, DomainError> {
        self.eval_named(x, "x")
    }

    /// Evaluates, naming the variable `var` in domain errors.
    pub fn eval_named(&self, x: f64, var: &str) -> Result<f64, DomainError> {
        let fail = |e: &Expr, reason| DomainError {
            subexpr: e.to_string(),
            var: var.to_string(),
            at: x,
            reason,
        };
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Neg(a) => -a.eval_named(x, var)?,
            Expr::Add(a, b) => a.eval_named(x, var)? + b.eval_named(x, var)?,
            Expr::Sub(a, b) => a.eval_named(x, var)? - b.eval_named(x, var)?,
            Expr::Mul(a, b) => a.eval_named(x, var)? * b.eval_named(x, var)?,
            Expr::Div(a, b) => {
                let num = a.eval_named(x, var)?;
                let den = b.eval_named(x, var)?;
                if den == 0.0 {
                    return Err(fail(self, "division by zero"));
                }
                num / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval_named(x, var)?;
                let exponent = b.eval_named(x, var)?;
                if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
                    if base == 0.0 && exponent < 0.0 {
                        return Err(fail(self, "zero to a negative power"));
                    }
                    base.powi(exponent as i32)
                } else if base > 0.0 {
                    base.powf(exponent)
                } else {
                    return Err(fail(self, "non-integer power of a non-positive base"));
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_named(x, var)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Log if v <= 0.0 => return Err(fail(self, "log of a non-positive value")),
                    Func::Log => v.ln(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt if v < 0.0 => return Err(fail(self, "sqrt of a negative value")),
                    Func::Sqrt => v.sqrt(),
                }
            }
        })
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.contains_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.contains_var() || b.contains_var(),
        }
    }

    /// Symbolic derivative with respect to the variable.
    pub fn differentiate(&self) -> Expr {
        fold(derive(self))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn num(v: f64) -> Box<Expr> {
    Box::new(Expr::Num(v))
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn derive(e: &Expr) -> Expr {
    use Expr::*;
    match e {
        Num(_) => Num(0.0),
        Var => Num(1.0),
        Neg(a) => Neg(b(derive(a))),
        Add(u, v) => Add(b(derive(u)), b(derive(v))),
        Sub(u, v) => Sub(b(derive(u)), b(derive(v))),
        Mul(u, v) => Add(
            b(Mul(b(derive(u)), v.clone())),
            b(Mul(u.clone(), b(derive(v)))),
        ),
        Div(u, v) => Div(
            b(Sub(
                b(Mul(b(derive(u)), v.clone())),
                b(Mul(u.clone(), b(derive(v)))),
            )),
            b(Pow(v.clone(), num(2.0))),
        ),
        Pow(u, v) if !v.contains_var() => Mul(
            b(Mul(
                v.clone(),
                b(Pow(u.clone(), b(Sub(v.clone(), num(1.0))))),
            )),
            b(derive(u)),
        ),
        Pow(u, v) => Mul(
            b(e.clone()),
            b(Add(
                b(Mul(b(derive(v)), b(Call(Func::Log, u.clone())))),
                b(Div(b(Mul(v.clone(), b(derive(u)))), u.clone())),
            )),
        ),
        Call(f, u) => {
            let du = b(derive(u));
            match f {
                Func::Exp => Mul(b(e.clone()), du),
                Func::Log => Div(du, u.clone()),
                Func::Sin => Mul(b(Call(Func::Cos, u.clone())), du),
                Func::Cos => Mul(b(Neg(b(Call(Func::Sin, u.clone())))), du),
                Func::Sqrt => Div(du, b(Mul(num(2.0), b(e.clone())))),
            }
        }
    }
}

/// Folds literal subtrees and drops additive/multiplicative identities.
fn fold(e: Expr) -> Expr {
    use Expr::*;
    let lit = |e: &Expr| match e {
        Num(v) => Some(*v),
        _ => None,
    };
    let folded = match e {
        Num(_) | Var => return e,
        Neg(a) => Neg(b(fold(*a))),
        Add(x, y) => Add(b(fold(*x)), b(fold(*y))),
        Sub(x, y) => Sub(b(fold(*x)), b(fold(*y))),
        Mul(x, y) => Mul(b(fold(*x)), b(fold(*y))),
        Div(x, y) => Div(b(fold(*x)), b(fold(*y))),
        Pow(x, y) => Pow(b(fold(*x)), b(fold(*y))),
        Call(f, a) => Call(f, b(fold(*a))),
    };
    if !folded.contains_var() {
        if let Ok(v) = folded.eval(0.0) {
            if v.is_finite() {
                return Num(v);
            }
        }
        return folded;
    }
    match folded {
        Neg(a) => match *a {
            Neg(inner) => *inner,
            other => Neg(b(other)),
        },
        Add(x, y) if lit(&x) == Some(0.0) => *y,
        Add(x, y) if lit(&y) == Some(0.0) => *x,
        Sub(x, y) if lit(&y) == Some(0.0) => *x,
        Sub(x, y) if lit(&x) == Some(0.0) => Neg(y),
        Mul(x, y) if lit(&x) == Some(0.0) || lit(&y) == Some(0.0) => Num(0.0),
        Mul(x, y) if lit(&x) == Some(1.0) => *y,
        Mul(x, y) if lit(&y) == Some(1.0) => *x,
        Div(x, y) if lit(&y) == Some(1.0) => *x,
        Div(x, _) if lit(&x) == Some(0.0) => Num(0.0),
        Pow(x, y) if lit(&y) == Some(1.0) => *x,
        Pow(_, y) if lit(&y) == Some(0.0) => Num(1.0),
        other => other,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, "x")
    }
}

impl Expr {
    /// Renders with the given variable name; parses back to an equivalent tree.
    pub fn pretty(&self, var: &str) -> String {
        struct Named<'a>(&'a Expr, &'a str);
        impl fmt::Display for Named<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write(f, self.1)
            }
        }
        Named(self, var).to_string()
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, var: &str) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8| -> fmt::Result {
            if e.precedence() < min_prec {
                f.write_str("(")?;
                e.write(f, var)?;
                f.write_str(")")
            } else {
                e.write(f, var)
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var => f.write_str(var),
            Expr::Neg(a) => {
                f.write_str("-")?;
                child(f, a, 3)
            }
            Expr::Add(a, c) | Expr::Sub(a, c) => {
                child(f, a, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) {
                    " + "
                } else {
                    " - "
                })?;
                child(f, c, 2)
            }
            Expr::Mul(a, c) | Expr::Div(a, c) => {
                child(f, a, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) {
                    " * "
                } else {
                    " / "
                })?;
                child(f, c, 3)
            }
            Expr::Pow(a, c) => {
                child(f, a, 5)?;
                f.write_str("^")?;
                child(f, c, 3)
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, var)?;
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn parses_power() {
        assert_eq!(parse("x^2").unwrap(), Expr::Pow(b(Expr::Var), num(2.0)));
    }

    #[test]
    fn parses_exp_of_square() {
        assert_eq!(
            parse("exp(x^2)").unwrap(),
            Expr::Call(Func::Exp, b(Expr::Pow(b(Expr::Var), num(2.0))))
        );
    }

    #[test]
    fn rejects_implicit_multiplication() {
        let err = parse("2x").unwrap_err();
        assert_eq!(err.offset, 1);
        assert!(err.expected.iter().any(|e| e == "operator"));
    }

    #[test]
    fn precedence_and_associativity() {
        // -x^2 is -(x^2)
        assert_eq!(parse("-x^2").unwrap().eval(3.0).unwrap(), -9.0);
        // right-associative power
        assert_eq!(parse("2^3^2").unwrap().eval(0.0).unwrap(), 512.0);
        assert_eq!(parse("1 - 2 - 3").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse("8 / 4 / 2").unwrap().eval(0.0).unwrap(), 1.0);
        assert_eq!(parse("x^-2").unwrap().eval(2.0).unwrap(), 0.25);
        assert_eq!(parse("1 + 2 * 3").unwrap().eval(0.0).unwrap(), 7.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert_eq!(parse("x +").unwrap_err().offset, 3);
        assert_eq!(parse("(x").unwrap_err().offset, 2);
        assert_eq!(parse("foo(x)").unwrap_err().offset, 0);
        assert_eq!(parse("x $ 2").unwrap_err().offset, 2);
        assert_eq!(parse("exp x").unwrap_err().offset, 4);
        assert_eq!(parse("").unwrap_err().offset, 0);
    }

    #[test]
    fn other_variable_names() {
        let e = parse_in("eps^-2", "eps").unwrap();
        assert_eq!(e.eval(0.5).unwrap(), 4.0);
        assert!(parse_in("x", "eps").is_err());
    }

    #[test]
    fn eval_examples() {
        assert_eq!(parse("x^2").unwrap().eval(0.5).unwrap(), 0.25);
        let err = parse("log(x)").unwrap().eval(-1.0).unwrap_err();
        assert_eq!(err.subexpr, "log(x)");
        let v = parse("x*log(x)^2").unwrap().eval(2.0).unwrap();
        assert!(close(v, 2.0 * 2f64.ln().powi(2), 1e-15));
        assert!(close(v, 0.960906, 1e-6));
    }

    #[test]
    fn domain_errors() {
        assert!(parse("sqrt(x)").unwrap().eval(-1.0).is_err());
        assert!(parse("1/x").unwrap().eval(0.0).is_err());
        assert!(parse("x^0.5").unwrap().eval(-4.0).is_err());
        // integer powers of negative bases are fine
        assert_eq!(parse("x^3").unwrap().eval(-2.0).unwrap(), -8.0);
    }

    #[test]
    fn derivative_examples() {
        let d = parse("x^2").unwrap().differentiate();
        assert_eq!(d.eval(3.0).unwrap(), 6.0);

        let d = parse("exp(x^2)").unwrap().differentiate();
        let expected = 2.0 * std::f64::consts::E;
        assert!(close(d.eval(1.0).unwrap(), expected, 1e-15));
        assert!(close(d.eval(1.0).unwrap(), 5.43656, 1e-5));

        let d = parse("x*log(x)^1.5").unwrap().differentiate();
        let l = 2f64.ln();
        let expected = l.powf(1.5) + 1.5 * l.sqrt();
        assert!(close(d.eval(2.0).unwrap(), expected, 1e-14));
        assert!(close(d.eval(2.0).unwrap(), 1.825915, 1e-6));
    }

    #[test]
    fn derivative_of_square_is_bitwise_two_x() {
        let d = parse("x^2").unwrap().differentiate();
        for x in [0.5, 0.7, 1.3e5, 3.0] {
            assert_eq!(d.eval(x).unwrap().to_bits(), (2.0 * x).to_bits());
        }
    }

    #[test]
    fn folding_keeps_variable_terms() {
        let d = parse("3*x + 2^3").unwrap().differentiate();
        assert_eq!(d, Expr::Num(3.0));
        let d = parse("x^x").unwrap().differentiate();
        // d/dx x^x = x^x (log x + 1)
        let x: f64 = 1.7;
        assert!(close(d.eval(x).unwrap(), x.powf(x) * (x.ln() + 1.0), 1e-14));
    }

    #[test]
    fn pretty_round_trip() {
        for s in [
            "x^2",
            "-x^2",
            "(-x)^2",
            "exp(x^2)",
            "x*log(x)^1.5",
            "1 - (2 - x)",
            "x / (2 * x)",
            "2^3^x",
            "(2^3)^x",
            "x^-2",
            "--x",
            "sqrt(x) * sin(x) - cos(x) / 3e-4",
        ] {
            let e = parse(s).unwrap();
            let again = parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{s} -> {e}");
        }
        let folded = Expr::Sub(b(Expr::Var), num(-1.5));
        assert_eq!(parse(&folded.to_string()).unwrap().eval(1.0).unwrap(), 2.5);
        let pow = Expr::Pow(num(-2.0), b(Expr::Var));
        assert_eq!(parse(&pow.to_string()).unwrap().eval(3.0).unwrap(), -8.0);
    }
}
