use thiserror::Error;

use super::{BinOp, Expr, Func, Var};

/// Variable bindings for one evaluation point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z1: f64,
}

impl Env {
    fn get(&self, var: Var) -> f64 {
        match var {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
            Var::Z1 => self.z1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtOfNegative(f64),
    #[error("non-finite result in `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at node {index}: {source}")]
pub struct SliceEvalError {
    pub index: usize,
    #[source]
    pub source: EvalError,
}

fn finite(v: f64, node: &Expr) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(node.to_string()))
    }
}

impl Expr {
    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => finite(*v, self),
            Expr::Var(var) => finite(env.get(*var), self),
            Expr::Neg(inner) => Ok(-inner.eval(env)?),
            Expr::Binary(op, l, r) => {
                let a = l.eval(env)?;
                let b = r.eval(env)?;
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                };
                finite(v, self)
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                let v = match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::SqrtOfNegative(a));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                    Func::Clamp => {
                        let lo = args[1].eval(env)?;
                        let hi = args[2].eval(env)?;
                        // lo > hi is not an error: upper bound wins, like min(max(v, lo), hi).
                        a.max(lo).min(hi)
                    }
                    Func::Pos => a.max(0.0),
                    Func::Neg => (-a).max(0.0),
                };
                finite(v, self)
            }
        }
    }
}

/// Evaluates `e` at every node of a slice. `ys` and `zs`, when given, must
/// have the same length as `xs`; missing fields evaluate as zero.
pub fn eval_slice(
    e: &Expr,
    t: f64,
    xs: &[f64],
    ys: Option<&[f64]>,
    zs: Option<&[f64]>,
) -> Result<Vec<f64>, SliceEvalError> {
    if let Some(ys) = ys {
        assert_eq!(ys.len(), xs.len(), "field slice length mismatch");
    }
    if let Some(zs) = zs {
        assert_eq!(zs.len(), xs.len(), "gradient slice length mismatch");
    }
    // Constant subtrees are common (absent coefficients); skip the tree walk.
    if let Expr::Num(v) = e {
        return if v.is_finite() {
            Ok(vec![*v; xs.len()])
        } else {
            Err(SliceEvalError {
                index: 0,
                source: EvalError::NonFinite(e.to_string()),
            })
        };
    }
    xs.iter()
        .enumerate()
        .map(|(index, &x)| {
            let env = Env {
                t,
                x,
                y: ys.map_or(0.0, |ys| ys[index]),
                z1: zs.map_or(0.0, |zs| zs[index]),
            };
            e.eval(&env).map_err(|source| SliceEvalError { index, source })
        })
        .collect()
}
