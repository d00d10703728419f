//! A small arithmetic expression language for configuration files.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | 't' | 'm' | 'x' | 'pi' | 'e'
//!          | func '(' expr ')' | '(' expr ')'
//! func    := exp | sin | cos | sqrt | ln
//! ```
//!
//! Errors carry the byte offset at which parsing failed.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    M,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Ln,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    E,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} of {arg} is undefined")]
    Domain { func: &'static str, arg: f64 },
}

/// Values bound to the expression variables.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub t: f64,
    pub m: f64,
    pub x: f64,
}

impl Bindings {
    pub fn t(t: f64) -> Self {
        Self {
            t,
            ..Self::default()
        }
    }

    pub fn mt(m: f64, t: f64) -> Self {
        Self {
            t,
            m,
            ..Self::default()
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.syntax("expected a number, identifier or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.syntax("malformed number"));
        }
        // An exponent needs at least one digit; otherwise 'e' is left for
        // the next token (and will be rejected as juxtaposition).
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number '{text}'"),
            })
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            "ln" => Some(Func::Ln),
            _ => None,
        };
        if let Some(func) = func {
            if self.peek() != Some(b'(') {
                return Err(self.syntax(&format!("expected '(' after '{name}'")));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.syntax("expected ')'"));
            }
            self.pos += 1;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        match name {
            "t" => Ok(Expr::Var(Var::T)),
            "m" => Ok(Expr::Var(Var::M)),
            "x" => Ok(Expr::Var(Var::X)),
            "pi" => Ok(Expr::Pi),
            "e" => Ok(Expr::E),
            _ => Err(ParseError::UnknownIdentifier {
                offset: start,
                name: name.to_string(),
            }),
        }
    }
}

impl Expr {
    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => b.t,
            Expr::Var(Var::M) => b.m,
            Expr::Var(Var::X) => b.x,
            Expr::Pi => std::f64::consts::PI,
            Expr::E => std::f64::consts::E,
            Expr::Neg(e) => -e.eval(b)?,
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval(b)?, r.eval(b)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => return Err(EvalError::DivisionByZero),
                    BinOp::Div => l / r,
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(b)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt if a < 0.0 => {
                        return Err(EvalError::Domain {
                            func: "sqrt",
                            arg: a,
                        })
                    }
                    Func::Sqrt => a.sqrt(),
                    Func::Ln if a <= 0.0 => return Err(EvalError::Domain { func: "ln", arg: a }),
                    Func::Ln => a.ln(),
                }
            }
        })
    }

    /// Whether the expression mentions `var`.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Var(v) => *v == var,
            Expr::Num(_) | Expr::Pi | Expr::E => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses(var),
            Expr::Bin(_, l, r) => l.uses(var) || r.uses(var),
        }
    }

    /// Polynomial degree in `var`, or `None` if the expression is not a
    /// polynomial in it (conservative: any `var` inside a function, a
    /// divisor, or a non-integer power gives `None`).
    pub fn polynomial_degree(&self, var: Var) -> Option<usize> {
        match self {
            Expr::Var(v) => Some(usize::from(*v == var)),
            Expr::Num(_) | Expr::Pi | Expr::E => Some(0),
            Expr::Neg(e) => e.polynomial_degree(var),
            Expr::Call(_, e) => (!e.uses(var)).then_some(0),
            Expr::Bin(op, l, r) => {
                let (dl, dr) = (l.polynomial_degree(var)?, r.polynomial_degree(var)?);
                match op {
                    BinOp::Add | BinOp::Sub => Some(dl.max(dr)),
                    BinOp::Mul => Some(dl + dr),
                    BinOp::Div => (dr == 0).then_some(dl),
                    BinOp::Pow => {
                        if dl == 0 && dr == 0 {
                            return Some(0);
                        }
                        if r.uses(Var::T) || r.uses(Var::M) || r.uses(Var::X) {
                            return None;
                        }
                        let p = r.eval(&Bindings::default()).ok()?;
                        (p >= 0.0 && p.fract() == 0.0 && p <= 64.0).then(|| dl * p as usize)
                    }
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the minimal parentheses needed to parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::M) => f.write_str("m"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Pi => f.write_str("pi"),
            Expr::E => f.write_str("e"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_wrapped(f, e, e.precedence() < 3)
            }
            Expr::Call(func, arg) => {
                let name = match func {
                    Func::Exp => "exp",
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Sqrt => "sqrt",
                    Func::Ln => "ln",
                };
                write!(f, "{name}({arg})")
            }
            Expr::Bin(BinOp::Pow, base, exp) => {
                write_wrapped(f, base, base.precedence() < 5)?;
                f.write_str("^")?;
                write_wrapped(f, exp, exp.precedence() < 3)
            }
            Expr::Bin(op, l, r) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => unreachable!(),
                };
                write_wrapped(f, l, l.precedence() < p)?;
                f.write_str(sym)?;
                write_wrapped(f, r, r.precedence() <= p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn eval(text: &str, b: Bindings) -> f64 {
        parse_expr(text).unwrap().eval(&b).unwrap()
    }

    #[test]
    fn heat_eigenvalue_expression() {
        let v = eval("m^2*pi^2 + 1 + t", Bindings::mt(1.0, 0.0));
        assert_abs_diff_eq!(v, PI * PI + 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v, 10.8696044, epsilon = 1e-7);
        assert_eq!(eval("exp(-pi^2*(1+t))*(1+t)", Bindings::t(-1.0)), 0.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("2^3^2", Bindings::default()), 512.0);
        assert_eq!(eval("-2^2", Bindings::default()), -4.0);
        assert_eq!(eval("2^-1", Bindings::default()), 0.5);
        assert_eq!(eval("8/4/2", Bindings::default()), 1.0);
        assert_eq!(eval("1 - 2 - 3", Bindings::default()), -4.0);
        assert_eq!(eval("2*3 + 4*5", Bindings::default()), 26.0);
        assert_eq!(eval("--3", Bindings::default()), 3.0);
        assert_eq!(eval("1.5e2 + .5", Bindings::default()), 150.5);
        assert_eq!(eval("2*e", Bindings::default()), 2.0 * std::f64::consts::E);
        assert_eq!(
            eval("sqrt(16) + ln(e) + cos(0) + sin(0)", Bindings::default()),
            6.0
        );
    }

    #[test]
    fn syntax_errors_report_offsets() {
        let err = parse_expr("2*+3").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 2, .. }), "{err}");
        assert_eq!(parse_expr("(1 + 2").unwrap_err().offset(), 6);
        assert_eq!(parse_expr("").unwrap_err().offset(), 0);
        assert_eq!(parse_expr("1 2").unwrap_err().offset(), 2);
        assert_eq!(parse_expr("sin 2").unwrap_err().offset(), 4);
        assert!(matches!(
            parse_expr("1 + foo").unwrap_err(),
            ParseError::UnknownIdentifier { offset: 4, .. }
        ));
        assert_eq!(parse_expr("2e").unwrap_err().offset(), 1);
    }

    #[test]
    fn evaluation_errors() {
        let b = Bindings::default();
        assert_eq!(
            parse_expr("1/t").unwrap().eval(&b),
            Err(EvalError::DivisionByZero)
        );
        assert!(matches!(
            parse_expr("ln(t)").unwrap().eval(&b),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            parse_expr("ln(-1)").unwrap().eval(&b),
            Err(EvalError::Domain { .. })
        ));
    }

    #[test]
    fn polynomial_degrees() {
        let deg = |s: &str| parse_expr(s).unwrap().polynomial_degree(Var::T);
        assert_eq!(deg("m^2*pi^2 + 1 + t"), Some(1));
        assert_eq!(deg("3 + t*t - t^3/2"), Some(3));
        assert_eq!(deg("exp(m) * (1 + t)^2"), Some(2));
        assert_eq!(deg("sin(t)"), None);
        assert_eq!(deg("1/(1+t)"), None);
        assert_eq!(deg("t^0.5"), None);
        assert_eq!(deg("2^t"), None);
    }

    const CORPUS: &[&str] = &[
        "1",
        "t",
        "m",
        "x",
        "pi",
        "e",
        "-t",
        "--t",
        "t + 1",
        "t - 1",
        "1 - (2 - 3)",
        "(1 - 2) - 3",
        "2*3*4",
        "2*(3*4)",
        "8/(4/2)",
        "(8/4)/2",
        "2^3^2",
        "(2^3)^2",
        "-2^2",
        "(-2)^2",
        "2^-1",
        "2^(-1)^2",
        "2^-(1 + t)",
        "m^2*pi^2 + 1 + t",
        "exp(-pi^2*(1 + t))*(1 + t)",
        "sin(pi*x)",
        "cos(2*t) - sin(t)/2",
        "sqrt(1 + t^2)",
        "ln(2 + t)",
        "-(1 + t)*m",
        "1/(1 + t)",
        "(1 + t)/(2 - t)",
        "exp(exp(t))",
        "0.5*(1 + t)",
        "1e-7 + t",
        "123456.789",
        "t*-1",
        "t - -1",
        "-(-(t))",
        "(t)",
        "((m))",
        "x^2 + m^2 + t^2",
        "2*pi*m*x",
        "exp(-m^2*pi^2*(1 + t))",
        "(1 + 0.5*exp(-2*pi^2))*sin(pi*x)",
        "t^(1/2)",
        "-t^2^-1",
        "3 - 4*5 + 6/7 - 8",
        "(3 - 4)*(5 + 6)/(7 - 8)",
        "cos(t)^2 + sin(t)^2",
    ];

    #[test]
    fn corpus_round_trips() {
        assert_eq!(CORPUS.len(), 50);
        for src in CORPUS {
            let e = parse_expr(src).unwrap_or_else(|err| panic!("{src}: {err}"));
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_expr() -> impl Strategy<Value = Expr> {
            let leaf = prop_oneof![
                (0.0f64..1e6).prop_map(Expr::Num),
                Just(Expr::Var(Var::T)),
                Just(Expr::Var(Var::M)),
                Just(Expr::Var(Var::X)),
                Just(Expr::Pi),
                Just(Expr::E),
            ];
            leaf.prop_recursive(5, 48, 2, |inner| {
                let op = prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ];
                let func = prop_oneof![
                    Just(Func::Exp),
                    Just(Func::Sin),
                    Just(Func::Cos),
                    Just(Func::Sqrt),
                    Just(Func::Ln)
                ];
                prop_oneof![
                    inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                    (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Bin(
                        o,
                        Box::new(l),
                        Box::new(r)
                    )),
                    (func, inner).prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
                ]
            })
        }

        proptest! {
            #[test]
            fn display_parses_back(e in arb_expr()) {
                let printed = e.to_string();
                prop_assert_eq!(parse_expr(&printed).unwrap(), e);
            }
        }
    }
}
