use thiserror::Error;

use super::{BinOp, Bound, Expr, Func};
use crate::scalar::Rational;
use num_traits::ToPrimitive;

/// Runtime value of an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Val {
    Int(i64),
    Real(f64),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("integer overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("expected {0}")]
    Type(&'static str),
    #[error("primed variable outside a transition context")]
    NoNextState,
}

impl Val {
    pub fn as_f64(self) -> f64 {
        match self {
            Val::Int(i) => i as f64,
            Val::Real(r) => r,
            Val::Bool(b) => f64::from(u8::from(b)),
        }
    }

    pub fn as_int(self) -> Result<i64, EvalError> {
        match self {
            Val::Int(i) => Ok(i),
            Val::Bool(b) => Ok(i64::from(b)),
            Val::Real(_) => Err(EvalError::Type("an integer")),
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Val::Bool(b) => Ok(b),
            _ => Err(EvalError::Type("a boolean")),
        }
    }

    /// Integers and booleans are both integral for arithmetic.
    fn integral(self) -> Option<i64> {
        match self {
            Val::Int(i) => Some(i),
            Val::Bool(b) => Some(i64::from(b)),
            Val::Real(_) => None,
        }
    }
}

/// What a name resolves to while compiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Var(usize),
    Const(i64),
    /// Interval constant: index plus endpoints.
    Interval(usize, i64, i64),
}

/// Expression with names resolved to slots and constants folded.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledExpr {
    Const(Val),
    Var(u32),
    Next(u32),
    /// Current corner value of an interval constant.
    Corner(u32),
    Neg(Box<CompiledExpr>),
    Not(Box<CompiledExpr>),
    Bin(BinOp, Box<CompiledExpr>, Box<CompiledExpr>),
    Ite(Box<CompiledExpr>, Box<CompiledExpr>, Box<CompiledExpr>),
    Call(Func, Box<CompiledExpr>, Box<CompiledExpr>),
}

/// Evaluation context: current valuation, optional successor, and the
/// values chosen for interval constants.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub cur: &'a [i64],
    pub next: Option<&'a [i64]>,
    pub corner: &'a [i64],
}

impl<'a> Env<'a> {
    pub fn state(cur: &'a [i64]) -> Self {
        Self {
            cur,
            next: None,
            corner: &[],
        }
    }
}

impl CompiledExpr {
    /// Compiles `expr`. Unknown names are a bug in the caller (the validator
    /// has already resolved them), reported as `Err(name)`.
    pub fn compile(
        expr: &Expr,
        resolve: &dyn Fn(&str) -> Option<Resolved>,
    ) -> Result<Self, String> {
        let c = match expr {
            Expr::Int(i) => CompiledExpr::Const(Val::Int(*i)),
            Expr::Dec(r) => CompiledExpr::Const(Val::Real(rational_to_f64(r))),
            Expr::Bool(b) => CompiledExpr::Const(Val::Bool(*b)),
            Expr::Name(id) => match resolve(&id.name) {
                Some(Resolved::Var(i)) => CompiledExpr::Var(i as u32),
                Some(Resolved::Const(v)) => CompiledExpr::Const(Val::Int(v)),
                Some(Resolved::Interval(_, lo, hi)) if lo == hi => {
                    CompiledExpr::Const(Val::Int(lo))
                }
                Some(Resolved::Interval(i, _, _)) => CompiledExpr::Corner(i as u32),
                None => return Err(id.name.clone()),
            },
            Expr::Endpoint(id, bound) => match resolve(&id.name) {
                Some(Resolved::Interval(_, lo, hi)) => CompiledExpr::Const(Val::Int(match bound {
                    Bound::Lo => lo,
                    Bound::Hi => hi,
                })),
                _ => return Err(id.name.clone()),
            },
            Expr::Next(id) => match resolve(&id.name) {
                Some(Resolved::Var(i)) => CompiledExpr::Next(i as u32),
                _ => return Err(id.name.clone()),
            },
            Expr::Neg(e) => CompiledExpr::Neg(Box::new(Self::compile(e, resolve)?)),
            Expr::Not(e) => CompiledExpr::Not(Box::new(Self::compile(e, resolve)?)),
            Expr::Binary(op, l, r) => CompiledExpr::Bin(
                *op,
                Box::new(Self::compile(l, resolve)?),
                Box::new(Self::compile(r, resolve)?),
            ),
            Expr::Ite(c, a, b) => CompiledExpr::Ite(
                Box::new(Self::compile(c, resolve)?),
                Box::new(Self::compile(a, resolve)?),
                Box::new(Self::compile(b, resolve)?),
            ),
            Expr::Call(f, a, b) => CompiledExpr::Call(
                *f,
                Box::new(Self::compile(a, resolve)?),
                Box::new(Self::compile(b, resolve)?),
            ),
        };
        Ok(c.fold())
    }

    fn is_const(&self) -> bool {
        matches!(self, CompiledExpr::Const(_))
    }

    /// Evaluates constant subtrees once.
    fn fold(self) -> Self {
        let foldable = match &self {
            CompiledExpr::Neg(e) | CompiledExpr::Not(e) => e.is_const(),
            CompiledExpr::Bin(_, l, r) | CompiledExpr::Call(_, l, r) => {
                l.is_const() && r.is_const()
            }
            CompiledExpr::Ite(c, a, b) => c.is_const() && a.is_const() && b.is_const(),
            _ => false,
        };
        if foldable {
            if let Ok(v) = self.eval(&Env::state(&[])) {
                return CompiledExpr::Const(v);
            }
        }
        self
    }

    /// True when the expression reads an interval corner.
    pub fn uses_corner(&self) -> bool {
        match self {
            CompiledExpr::Corner(_) => true,
            CompiledExpr::Const(_) | CompiledExpr::Var(_) | CompiledExpr::Next(_) => false,
            CompiledExpr::Neg(e) | CompiledExpr::Not(e) => e.uses_corner(),
            CompiledExpr::Bin(_, l, r) | CompiledExpr::Call(_, l, r) => {
                l.uses_corner() || r.uses_corner()
            }
            CompiledExpr::Ite(c, a, b) => c.uses_corner() || a.uses_corner() || b.uses_corner(),
        }
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<Val, EvalError> {
        match self {
            CompiledExpr::Const(v) => Ok(*v),
            CompiledExpr::Var(i) => Ok(Val::Int(env.cur[*i as usize])),
            CompiledExpr::Next(i) => env
                .next
                .map(|n| Val::Int(n[*i as usize]))
                .ok_or(EvalError::NoNextState),
            CompiledExpr::Corner(i) => Ok(Val::Int(env.corner[*i as usize])),
            CompiledExpr::Neg(e) => match e.eval(env)? {
                Val::Real(r) => Ok(Val::Real(-r)),
                v => v
                    .as_int()?
                    .checked_neg()
                    .map(Val::Int)
                    .ok_or(EvalError::Overflow),
            },
            CompiledExpr::Not(e) => Ok(Val::Bool(!e.eval(env)?.as_bool()?)),
            CompiledExpr::Bin(op, l, r) => eval_binary(*op, l, r, env),
            CompiledExpr::Ite(c, a, b) => {
                if c.eval(env)?.as_bool()? {
                    a.eval(env)
                } else {
                    b.eval(env)
                }
            }
            CompiledExpr::Call(f, a, b) => {
                let (a, b) = (a.eval(env)?, b.eval(env)?);
                Ok(match (a.integral(), b.integral()) {
                    (Some(x), Some(y)) => Val::Int(match f {
                        Func::Min => x.min(y),
                        Func::Max => x.max(y),
                    }),
                    _ => Val::Real(match f {
                        Func::Min => a.as_f64().min(b.as_f64()),
                        Func::Max => a.as_f64().max(b.as_f64()),
                    }),
                })
            }
        }
    }

    pub fn eval_bool(&self, env: &Env<'_>) -> Result<bool, EvalError> {
        self.eval(env)?.as_bool()
    }

    pub fn eval_int(&self, env: &Env<'_>) -> Result<i64, EvalError> {
        self.eval(env)?.as_int()
    }

    pub fn eval_f64(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        Ok(self.eval(env)?.as_f64())
    }
}

fn eval_binary(
    op: BinOp,
    l: &CompiledExpr,
    r: &CompiledExpr,
    env: &Env<'_>,
) -> Result<Val, EvalError> {
    match op {
        BinOp::And => {
            return Ok(Val::Bool(
                l.eval(env)?.as_bool()? && r.eval(env)?.as_bool()?,
            ));
        }
        BinOp::Or => {
            return Ok(Val::Bool(
                l.eval(env)?.as_bool()? || r.eval(env)?.as_bool()?,
            ));
        }
        _ => {}
    }
    let (a, b) = (l.eval(env)?, r.eval(env)?);
    let ints = a.integral().zip(b.integral());
    let v = match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul => match ints {
            Some((x, y)) => Val::Int(
                match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    _ => x.checked_mul(y),
                }
                .ok_or(EvalError::Overflow)?,
            ),
            None => {
                let (x, y) = (a.as_f64(), b.as_f64());
                Val::Real(match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    _ => x * y,
                })
            }
        },
        BinOp::Div => {
            let y = b.as_f64();
            if y == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            Val::Real(a.as_f64() / y)
        }
        BinOp::Mod => {
            let (x, y) = ints.ok_or(EvalError::Type("integer operands for %"))?;
            if y == 0 {
                return Err(EvalError::DivisionByZero);
            }
            Val::Int(x.rem_euclid(y))
        }
        BinOp::Eq | BinOp::Ne if matches!((a, b), (Val::Bool(_), Val::Bool(_))) => {
            let eq = a == b;
            Val::Bool(if op == BinOp::Eq { eq } else { !eq })
        }
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match ints {
                Some((x, y)) => x.partial_cmp(&y),
                None => a.as_f64().partial_cmp(&b.as_f64()),
            };
            let Some(ord) = ord else {
                return Ok(Val::Bool(op == BinOp::Ne));
            };
            use std::cmp::Ordering::*;
            Val::Bool(match op {
                BinOp::Eq => ord == Equal,
                BinOp::Ne => ord != Equal,
                BinOp::Lt => ord == Less,
                BinOp::Le => ord != Greater,
                BinOp::Gt => ord == Greater,
                _ => ord != Less,
            })
        }
        BinOp::And | BinOp::Or => unreachable!(),
    };
    Ok(v)
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ident;

    fn resolver(name: &str) -> Option<Resolved> {
        match name {
            "x" => Some(Resolved::Var(0)),
            "y" => Some(Resolved::Var(1)),
            "K" => Some(Resolved::Const(7)),
            "T" => Some(Resolved::Interval(0, 3, 4)),
            "D" => Some(Resolved::Interval(1, 2, 2)),
            _ => None,
        }
    }

    fn n(s: &str) -> Expr {
        Expr::Name(Ident::new(s))
    }

    fn b(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::binary(op, l, r)
    }

    #[test]
    fn constants_fold() {
        let e = b(BinOp::Add, n("K"), Expr::Int(1));
        assert_eq!(
            CompiledExpr::compile(&e, &resolver).unwrap(),
            CompiledExpr::Const(Val::Int(8))
        );
        // degenerate intervals are plain constants
        assert_eq!(
            CompiledExpr::compile(&n("D"), &resolver).unwrap(),
            CompiledExpr::Const(Val::Int(2))
        );
        let e = Expr::Endpoint(Ident::new("T"), Bound::Hi);
        assert_eq!(
            CompiledExpr::compile(&e, &resolver).unwrap(),
            CompiledExpr::Const(Val::Int(4))
        );
    }

    #[test]
    fn comparisons_coerce_in_arithmetic() {
        // 1 - (x > 3)
        let e = b(BinOp::Sub, Expr::Int(1), b(BinOp::Gt, n("x"), Expr::Int(3)));
        let c = CompiledExpr::compile(&e, &resolver).unwrap();
        assert_eq!(c.eval(&Env::state(&[5, 0])).unwrap(), Val::Int(0));
        assert_eq!(c.eval(&Env::state(&[2, 0])).unwrap(), Val::Int(1));
    }

    #[test]
    fn corners_and_next() {
        let e = b(BinOp::Add, n("x"), n("T"));
        let c = CompiledExpr::compile(&e, &resolver).unwrap();
        assert!(c.uses_corner());
        let env = Env {
            cur: &[1, 0],
            next: None,
            corner: &[4, 2],
        };
        assert_eq!(c.eval_int(&env).unwrap(), 5);

        let e = b(BinOp::Sub, Expr::Next(Ident::new("y")), n("y"));
        let c = CompiledExpr::compile(&e, &resolver).unwrap();
        assert_eq!(
            c.eval_int(&Env::state(&[0, 1])),
            Err(EvalError::NoNextState)
        );
        let env = Env {
            cur: &[0, 1],
            next: Some(&[0, 4]),
            corner: &[],
        };
        assert_eq!(c.eval_int(&env).unwrap(), 3);
    }

    #[test]
    fn runtime_errors() {
        let div = CompiledExpr::compile(&b(BinOp::Div, n("x"), n("y")), &resolver).unwrap();
        assert_eq!(
            div.eval(&Env::state(&[1, 0])),
            Err(EvalError::DivisionByZero)
        );
        assert_eq!(div.eval(&Env::state(&[1, 4])).unwrap(), Val::Real(0.25));
        let big = CompiledExpr::compile(&b(BinOp::Mul, n("x"), n("x")), &resolver).unwrap();
        assert_eq!(
            big.eval(&Env::state(&[i64::MAX, 0])),
            Err(EvalError::Overflow)
        );
        let m = CompiledExpr::compile(&b(BinOp::Mod, n("x"), Expr::Int(2)), &resolver).unwrap();
        assert_eq!(m.eval_int(&Env::state(&[-3, 0])).unwrap(), 1);
    }

    #[test]
    fn unknown_name_is_reported() {
        assert_eq!(
            CompiledExpr::compile(&n("zz"), &resolver),
            Err("zz".to_string())
        );
    }
}
