//! Coefficient expression language.
//!
//! Problem files describe the terminal condition, the coefficients `f`, `g`,
//! `h` and both obstacles as arithmetic expressions over the variables
//! `t`, `x`, `y` and `z1`. This module parses them into an [`Expr`] tree,
//! prints them back in a canonical form and evaluates them pointwise or over a
//! whole grid slice.
//!
//! Grammar (standard precedence, left associative, whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! Built-in functions: `sin`, `cos`, `exp`, `abs`, `sqrt`, `min(a, b)`,
//! `max(a, b)`, `clamp(v, lo, hi)`, `pos(v) = max(v, 0)`, `neg(v) = max(-v, 0)`.
//!
//! The canonical printer ([`Expr`]'s `Display`) emits binary operators with
//! single spaces, function arguments separated by `", "`, parentheses only
//! where precedence or associativity requires them, and numbers in Rust's
//! shortest round-trip `Debug` form (`1.0`, `0.3`, `1e-7`). This output is
//! stable: re-parsing it yields a structurally equal tree.

mod eval;
mod parse;

use std::fmt;

pub use eval::{eval_slice, Env, EvalError, SliceEvalError};
pub use parse::{parse, ParseError};

/// Free variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
    Z1,
}

impl Var {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "t" => Some(Var::T),
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z1" => Some(Var::Z1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::Z1 => "z1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
    Clamp,
    Pos,
    Neg,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Abs,
        Func::Sqrt,
        Func::Min,
        Func::Max,
        Func::Clamp,
        Func::Pos,
        Func::Neg,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
            Func::Pos => "pos",
            Func::Neg => "neg",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Clamp => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Expression tree. Structural equality (`PartialEq`) compares trees node by
/// node; it is what tests use to compare coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

const PREC_UNARY: u8 = 3;

impl Expr {
    pub fn num(value: f64) -> Self {
        Expr::Num(value)
    }

    pub fn zero() -> Self {
        Expr::Num(0.0)
    }

    /// True when the expression references `var` anywhere.
    pub fn references(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(inner) => inner.references(var),
            Expr::Binary(_, l, r) => l.references(var) || r.references(var),
            Expr::Call(_, args) => args.iter().any(|a| a.references(var)),
        }
    }

    /// True when the expression depends on the solution `y` or its gradient `z1`.
    pub fn depends_on_solution(&self) -> bool {
        self.references(Var::Y) || self.references(Var::Z1)
    }

    /// Literal zero (as produced by parsing `"0"`), used to skip work for
    /// absent coefficients.
    pub fn is_literal_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right_operand: bool) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                inner.fmt_prec(f, PREC_UNARY, false)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let wrap = p < parent || (p == parent && right_operand);
                if wrap {
                    f.write_str("(")?;
                }
                l.fmt_prec(f, p, false)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, p, true)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.fmt_prec(f, 0, false)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
