//! Mini-language for coefficient expressions.
//!
//! Problem definitions express their coefficients (diffusion rows, drift,
//! generator, terminal datum) as small arithmetic formulas over a declared
//! variable set, e.g. `sqrt(2/(2+tanh(x1)))` or `tanh(x1)*cos(x2_1) - y +
//! 0.5*z_1`. This module lexes, parses (Pratt-style), pretty-prints and
//! evaluates those formulas. Variables are resolved to env slots at parse
//! time so that evaluation is allocation-free.

use std::fmt;
use thiserror::Error;

/// Binding powers. `^` binds tighter than unary minus, which binds tighter
/// than `*` `/`, which bind tighter than `+` `-`. `^` is right-associative,
/// the rest left-associative.
const BP_ADD: (u8, u8) = (1, 2);
const BP_MUL: (u8, u8) = (3, 4);
const BP_NEG: u8 = 5;
const BP_POW: (u8, u8) = (8, 7);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn binding_power(self) -> (u8, u8) {
        match self {
            BinOp::Add | BinOp::Sub => BP_ADD,
            BinOp::Mul | BinOp::Div => BP_MUL,
            BinOp::Pow => BP_POW,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// An ordered set of legal variable names; parse resolves identifiers to
/// slot indices into this set, and eval takes the bindings as a slice in
/// the same order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> VarSet {
        VarSet {
            names: names.iter().map(|s| s.as_ref().to_owned()).collect(),
        }
    }

    /// Variables for spatial coefficients: `x1, x2_1, .., x2_d`.
    pub fn spatial(d: usize) -> VarSet {
        let mut names = vec!["x1".to_owned()];
        for i in 1..=d {
            names.push(format!("x2_{i}"));
        }
        VarSet { names }
    }

    /// Variables for the generator: `x1, x2_1.., y, z_0, .., z_d`.
    pub fn generator(d: usize) -> VarSet {
        let mut set = VarSet::spatial(d);
        set.names.push("y".to_owned());
        for i in 0..=d {
            set.names.push(format!("z_{i}"));
        }
        set
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Returns true if `name` belongs to the variable universe of the language
/// (`x1`, `x2_<i>`, `y`, `z_<i>`, `t`), regardless of any particular slot set.
fn is_language_variable(name: &str) -> bool {
    if matches!(name, "x1" | "y" | "t") {
        return true;
    }
    for prefix in ["x2_", "z_"] {
        if let Some(rest) = name.strip_prefix(prefix) {
            return !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit());
        }
    }
    false
}

#[derive(Debug, Clone)]
pub enum Expr {
    Num { value: f64, pos: u32 },
    Var { slot: u32, pos: u32 },
    Neg { arg: Box<Expr>, pos: u32 },
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr>, pos: u32 },
    Call { func: Func, args: Vec<Expr>, pos: u32 },
}

impl Expr {
    pub fn pos(&self) -> u32 {
        match self {
            Expr::Num { pos, .. }
            | Expr::Var { pos, .. }
            | Expr::Neg { pos, .. }
            | Expr::Bin { pos, .. }
            | Expr::Call { pos, .. } => *pos,
        }
    }

    /// Structural equality, ignoring source positions.
    pub fn same_structure(&self, other: &Expr) -> bool {
        match (self, other) {
            (Expr::Num { value: a, .. }, Expr::Num { value: b, .. }) => {
                a.to_bits() == b.to_bits()
            }
            (Expr::Var { slot: a, .. }, Expr::Var { slot: b, .. }) => a == b,
            (Expr::Neg { arg: a, .. }, Expr::Neg { arg: b, .. }) => a.same_structure(b),
            (
                Expr::Bin { op: oa, lhs: la, rhs: ra, .. },
                Expr::Bin { op: ob, lhs: lb, rhs: rb, .. },
            ) => oa == ob && la.same_structure(lb) && ra.same_structure(rb),
            (
                Expr::Call { func: fa, args: aa, .. },
                Expr::Call { func: fb, args: ab, .. },
            ) => {
                fa == fb
                    && aa.len() == ab.len()
                    && aa.iter().zip(ab).all(|(x, y)| x.same_structure(y))
            }
            _ => false,
        }
    }

    /// Does the expression reference the given slot anywhere?
    pub fn references_slot(&self, slot: usize) -> bool {
        match self {
            Expr::Num { .. } => false,
            Expr::Var { slot: s, .. } => *s as usize == slot,
            Expr::Neg { arg, .. } => arg.references_slot(slot),
            Expr::Bin { lhs, rhs, .. } => {
                lhs.references_slot(slot) || rhs.references_slot(slot)
            }
            Expr::Call { args, .. } => args.iter().any(|a| a.references_slot(slot)),
        }
    }

    /// IEEE double-precision evaluation. `env` binds the variable slots in
    /// the order of the `VarSet` the expression was parsed against.
    pub fn eval(&self, env: &[f64]) -> Result<f64, EvalError> {
        let v = self.eval_inner(env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError { pos: self.pos(), kind: EvalErrorKind::NonFinite })
        }
    }

    fn eval_inner(&self, env: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Num { value, .. } => Ok(*value),
            Expr::Var { slot, pos } => env
                .get(*slot as usize)
                .copied()
                .ok_or(EvalError { pos: *pos, kind: EvalErrorKind::UnboundVariable }),
            Expr::Neg { arg, .. } => Ok(-arg.eval_inner(env)?),
            Expr::Bin { op, lhs, rhs, pos } => {
                let a = lhs.eval_inner(env)?;
                let b = rhs.eval_inner(env)?;
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError {
                                pos: *pos,
                                kind: EvalErrorKind::DivisionByZero,
                            });
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                };
                if v.is_nan() {
                    return Err(EvalError { pos: *pos, kind: EvalErrorKind::NonFinite });
                }
                Ok(v)
            }
            Expr::Call { func, args, pos } => {
                let a = args[0].eval_inner(env)?;
                let v = match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError {
                                pos: *pos,
                                kind: EvalErrorKind::SqrtOfNegative,
                            });
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval_inner(env)?),
                    Func::Max => a.max(args[1].eval_inner(env)?),
                };
                Ok(v)
            }
        }
    }

    /// Pretty-print against the variable set the expression was parsed with.
    /// `parse(print(e))` yields a structurally identical tree.
    pub fn print(&self, vars: &VarSet) -> String {
        let mut out = String::new();
        self.print_into(vars, 0, &mut out);
        out
    }

    fn print_into(&self, vars: &VarSet, min_bp: u8, out: &mut String) {
        match self {
            Expr::Num { value, .. } => {
                let v = *value;
                // Plain decimal where it stays readable, e-notation otherwise;
                // both forms re-lex to the identical f64.
                if v != 0.0 && (v.abs() >= 1e16 || v.abs() < 1e-4) {
                    out.push_str(&format!("{v:e}"));
                } else {
                    out.push_str(&format!("{v}"));
                }
            }
            Expr::Var { slot, .. } => out.push_str(vars.name(*slot as usize)),
            Expr::Neg { arg, .. } => {
                let parens = min_bp > BP_NEG;
                if parens {
                    out.push('(');
                }
                out.push('-');
                arg.print_into(vars, BP_NEG, out);
                if parens {
                    out.push(')');
                }
            }
            Expr::Bin { op, lhs, rhs, .. } => {
                let (lbp, rbp) = op.binding_power();
                let parens = min_bp > lbp;
                if parens {
                    out.push('(');
                }
                // For the right-associative `^` an equal-precedence child on
                // the left must be forced into parentheses.
                let lhs_req = if rbp < lbp { lbp + 1 } else { lbp };
                lhs.print_into(vars, lhs_req, out);
                out.push_str(op.symbol());
                rhs.print_into(vars, rbp, out);
                if parens {
                    out.push(')');
                }
            }
            Expr::Call { func, args, .. } => {
                out.push_str(func.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.print_into(vars, 0, out);
                }
                out.push(')');
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalErrorKind {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative value")]
    SqrtOfNegative,
    #[error("non-finite result")]
    NonFinite,
    #[error("unbound variable slot")]
    UnboundVariable,
}

/// Domain error during evaluation; signals an invalid coefficient at that
/// point rather than aborting the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at byte {pos}")]
pub struct EvalError {
    pub pos: u32,
    pub kind: EvalErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: u32, message: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: u32, name: String },
    #[error("variable `{name}` is not allowed in this slot (byte {pos})")]
    VariableNotAllowed { pos: u32, name: String },
    #[error("function `{name}` expects {expected} argument(s), got {got} (byte {pos})")]
    WrongArity { pos: u32, name: String, expected: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn next_token(&mut self) -> Result<(Tok, u32), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos as u32;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' => return self.lex_number(),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => return self.lex_ident(),
            other => {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn lex_number(&mut self) -> Result<(Tok, u32), ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            // Only take the exponent if it is well-formed; `2e` would
            // otherwise swallow a trailing identifier character.
            let mut probe = self.pos + 1;
            if probe < self.src.len() && matches!(self.src[probe], b'+' | b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            pos: start as u32,
            message: format!("invalid number literal `{text}`"),
        })?;
        if !value.is_finite() {
            return Err(ParseError::Syntax {
                pos: start as u32,
                message: format!("number literal `{text}` overflows a double"),
            });
        }
        Ok((Tok::Num(value), start as u32))
    }

    fn lex_ident(&mut self) -> Result<(Tok, u32), ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok((Tok::Ident(text.to_owned()), start as u32))
    }
}

// ---------------------------------------------------------------------------
// Pratt parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: Vec<(Tok, u32)>,
    cursor: usize,
    vars: &'a VarSet,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &(Tok, u32) {
        &self.tokens[self.cursor]
    }

    fn bump(&mut self) -> (Tok, u32) {
        let t = self.tokens[self.cursor].clone();
        if self.cursor + 1 < self.tokens.len() {
            self.cursor += 1;
        }
        t
    }

    fn expr_bp(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let (tok, pos) = self.bump();
        let mut lhs = match tok {
            Tok::Num(value) => Expr::Num { value, pos },
            Tok::Minus => {
                let arg = self.expr_bp(BP_NEG)?;
                Expr::Neg { arg: Box::new(arg), pos }
            }
            Tok::LParen => {
                let inner = self.expr_bp(0)?;
                let (close, cpos) = self.bump();
                if close != Tok::RParen {
                    return Err(ParseError::Syntax {
                        pos: cpos,
                        message: "expected `)`".to_owned(),
                    });
                }
                inner
            }
            Tok::Ident(name) => self.ident(name, pos)?,
            other => {
                return Err(ParseError::Syntax {
                    pos,
                    message: format!("unexpected token {other:?}"),
                })
            }
        };

        loop {
            let (op, opos) = match self.peek() {
                (Tok::Plus, p) => (BinOp::Add, *p),
                (Tok::Minus, p) => (BinOp::Sub, *p),
                (Tok::Star, p) => (BinOp::Mul, *p),
                (Tok::Slash, p) => (BinOp::Div, *p),
                (Tok::Caret, p) => (BinOp::Pow, *p),
                _ => break,
            };
            let (lbp, rbp) = op.binding_power();
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr_bp(rbp)?;
            lhs = Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs), pos: opos };
        }
        Ok(lhs)
    }

    fn ident(&mut self, name: String, pos: u32) -> Result<Expr, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            let (open, opos) = self.bump();
            if open != Tok::LParen {
                return Err(ParseError::Syntax {
                    pos: opos,
                    message: format!("expected `(` after function `{name}`"),
                });
            }
            let mut args = vec![self.expr_bp(0)?];
            loop {
                match self.bump() {
                    (Tok::Comma, _) => args.push(self.expr_bp(0)?),
                    (Tok::RParen, _) => break,
                    (_, p) => {
                        return Err(ParseError::Syntax {
                            pos: p,
                            message: "expected `,` or `)` in argument list".to_owned(),
                        })
                    }
                }
            }
            if args.len() != func.arity() {
                return Err(ParseError::WrongArity {
                    pos,
                    name,
                    expected: func.arity(),
                    got: args.len(),
                });
            }
            return Ok(Expr::Call { func, args, pos });
        }
        match self.vars.slot(&name) {
            Some(slot) => Ok(Expr::Var { slot: slot as u32, pos }),
            None if is_language_variable(&name) => {
                Err(ParseError::VariableNotAllowed { pos, name })
            }
            None => Err(ParseError::UnknownIdentifier { pos, name }),
        }
    }
}

/// Parse `source` against the allowed variable set, with standard precedence
/// (`^` above unary `-`, above `*` `/`, above `+` `-`; `^` right-associative,
/// the rest left-associative).
pub fn parse(source: &str, vars: &VarSet) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Syntax { pos: 0, message: "empty expression".to_owned() });
    }
    let mut lexer = Lexer::new(source);
    let mut tokens = Vec::new();
    loop {
        let (tok, pos) = lexer.next_token()?;
        let eof = tok == Tok::Eof;
        tokens.push((tok, pos));
        if eof {
            break;
        }
    }
    let mut parser = Parser { tokens, cursor: 0, vars };
    let expr = parser.expr_bp(0)?;
    let (trailing, pos) = parser.peek().clone();
    if trailing != Tok::Eof {
        return Err(ParseError::Syntax {
            pos,
            message: format!("trailing input starting with {trailing:?}"),
        });
    }
    Ok(expr)
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vars_xy() -> VarSet {
        VarSet::new(&["x1", "x2_1", "y", "z_0", "z_1"])
    }

    fn eval_str(src: &str, env: &[f64]) -> f64 {
        parse(src, &vars_xy()).unwrap().eval(env).unwrap()
    }

    // Fixed table of (source, env, expected) triples. Each expected value is
    // either forced by hand or a direct scalar computation.
    #[test]
    fn precedence_golden_suite() {
        let e = std::f64::consts::E;
        let cases: &[(&str, [f64; 5], f64)] = &[
            ("5", [0.0; 5], 5.0),
            ("1+2*3", [0.0; 5], 7.0),
            ("(1+2)*3", [0.0; 5], 9.0),
            ("2+tanh(x1)", [0.0; 5], 2.0),
            ("x1*x2_1", [2.0, 3.0, 0.0, 0.0, 0.0], 6.0),
            ("min(1, exp(x1))", [-1.0, 0.0, 0.0, 0.0, 0.0], (-1.0f64).exp()),
            ("max(1, exp(x1))", [-1.0, 0.0, 0.0, 0.0, 0.0], 1.0),
            ("2^3^2", [0.0; 5], 512.0),        // right-associative
            ("(2^3)^2", [0.0; 5], 64.0),
            ("-2^2", [0.0; 5], -4.0),          // ^ binds above unary -
            ("2^-1", [0.0; 5], 0.5),
            ("8/4/2", [0.0; 5], 1.0),          // left-associative
            ("8-4-2", [0.0; 5], 2.0),
            ("8-4+2", [0.0; 5], 6.0),
            ("-2*3", [0.0; 5], -6.0),
            ("2*-3", [0.0; 5], -6.0),
            ("1-(-2)", [0.0; 5], 3.0),
            ("abs(-3.5)", [0.0; 5], 3.5),
            ("sqrt(4)+1", [0.0; 5], 3.0),
            ("cos(0)*sin(0)", [0.0; 5], 0.0),
            ("exp(1)", [0.0; 5], e),
            ("1e2+0.5", [0.0; 5], 100.5),
            ("2.5e-1", [0.0; 5], 0.25),
            ("y+0.5*z_1", [0.0, 0.0, 1.0, 9.0, 4.0], 3.0),
            ("1/2^2", [0.0; 5], 0.25),
        ];
        for (src, env, expected) in cases {
            let got = eval_str(src, env);
            assert_eq!(got, *expected, "source `{src}`");
        }
    }

    #[test]
    fn eval_is_pure() {
        let expr = parse("tanh(x1)*cos(x2_1) - y + 0.5*z_1", &vars_xy()).unwrap();
        let env = [0.3, -1.2, 0.7, 0.1, -0.4];
        let a = expr.eval(&env).unwrap();
        for _ in 0..10 {
            assert_eq!(a.to_bits(), expr.eval(&env).unwrap().to_bits());
        }
    }

    #[test]
    fn domain_errors_are_values() {
        let vars = vars_xy();
        let sqrt_neg = parse("sqrt(x1)", &vars).unwrap();
        let err = sqrt_neg.eval(&[-1.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::SqrtOfNegative);

        let div = parse("1/x1", &vars).unwrap();
        let err = div.eval(&[0.0; 5]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);

        let overflow = parse("exp(x1)*exp(x1)", &vars).unwrap();
        let err = overflow.eval(&[400.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::NonFinite);
    }

    #[test]
    fn parse_errors_carry_position_and_kind() {
        let vars = VarSet::spatial(1);
        match parse("1 + $", &vars).unwrap_err() {
            ParseError::Syntax { pos, .. } => assert_eq!(pos, 4),
            other => panic!("unexpected: {other:?}"),
        }
        match parse("1 + frob", &vars).unwrap_err() {
            ParseError::UnknownIdentifier { name, pos } => {
                assert_eq!(name, "frob");
                assert_eq!(pos, 4);
            }
            other => panic!("unexpected: {other:?}"),
        }
        // `y` is a language variable but not legal for a spatial slot.
        match parse("x1 + y", &vars).unwrap_err() {
            ParseError::VariableNotAllowed { name, .. } => assert_eq!(name, "y"),
            other => panic!("unexpected: {other:?}"),
        }
        match parse("min(1)", &vars).unwrap_err() {
            ParseError::WrongArity { expected, got, .. } => {
                assert_eq!((expected, got), (2, 1));
            }
            other => panic!("unexpected: {other:?}"),
        }
        assert!(parse("", &vars).is_err());
        assert!(parse("1 + ", &vars).is_err());
        assert!(parse("1) ", &vars).is_err());
    }

    #[test]
    fn scientific_notation_boundaries() {
        // `2e` must not swallow the identifier-looking tail.
        let vars = VarSet::spatial(1);
        assert!(parse("2e", &vars).is_err());
        assert_eq!(eval_str("2E3", &[0.0; 5]), 2000.0);
        assert!(parse("1e999", &vars).is_err()); // overflows f64
    }

    // Random AST generator for the round-trip property.
    fn arb_expr(depth: u32) -> BoxedStrategy<Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(|v| Expr::Num { value: v, pos: 0 }),
            (0u32..5).prop_map(|slot| Expr::Var { slot, pos: 0 }),
        ];
        leaf.prop_recursive(depth, 64, 4, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg { arg: Box::new(a), pos: 0 }),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, lhs, rhs)| Expr::Bin {
                        op,
                        lhs: Box::new(lhs),
                        rhs: Box::new(rhs),
                        pos: 0,
                    }),
                (
                    prop_oneof![
                        Just(Func::Sin),
                        Just(Func::Cos),
                        Just(Func::Tanh),
                        Just(Func::Exp),
                        Just(Func::Sqrt),
                        Just(Func::Abs)
                    ],
                    inner.clone()
                )
                    .prop_map(|(func, a)| Expr::Call { func, args: vec![a], pos: 0 }),
                (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                    .prop_map(|(func, a, b)| Expr::Call { func, args: vec![a, b], pos: 0 }),
            ]
        })
        .boxed()
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(6)) {
            let vars = vars_xy();
            let printed = e.print(&vars);
            let reparsed = parse(&printed, &vars).unwrap();
            prop_assert!(
                e.same_structure(&reparsed),
                "printed `{printed}` reparsed differently"
            );
        }
    }
}
