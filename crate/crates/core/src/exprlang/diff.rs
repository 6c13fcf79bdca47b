//! Symbolic partial derivatives.

use super::{BinaryOp, DiffError, Expr, UnaryOp};

fn is_zero(e: &Expr) -> bool {
    e.as_const() == Some(0.0)
}

fn is_one(e: &Expr) -> bool {
    e.as_const() == Some(1.0)
}

// The helpers below drop additive zeros and multiplicative ones/zeros so that
// derivative trees stay proportional to the input. They never reorder
// operands.

fn add(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (true, _) => b,
        (_, true) => a,
        _ => a + b,
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (_, true) => a,
        (true, _) => -b,
        _ => a - b,
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        Expr::Const(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        a * b
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        Expr::Const(0.0)
    } else if is_one(&b) {
        a
    } else {
        a / b
    }
}

pub(super) fn diff(e: &Expr, v: &str) -> Result<Expr, DiffError> {
    if !e.depends_on(v) {
        return Ok(Expr::Const(0.0));
    }
    Ok(match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(name) => Expr::Const(if &**name == v { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let a = (**a).clone();
            let da = diff(&a, v)?;
            match op {
                UnaryOp::Neg => -da,
                UnaryOp::Sin => mul(a.cos(), da),
                UnaryOp::Cos => mul(-a.sin(), da),
                UnaryOp::Exp => mul(a.exp(), da),
                UnaryOp::Tanh => {
                    let t = a.tanh();
                    mul(1.0 - t.clone() * t, da)
                }
                UnaryOp::Sqrt => div(da, 2.0 * a.sqrt()),
            }
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(diff(&a, v)?, diff(&b, v)?),
                BinaryOp::Sub => sub(diff(&a, v)?, diff(&b, v)?),
                BinaryOp::Mul => {
                    let da = diff(&a, v)?;
                    let db = diff(&b, v)?;
                    add(mul(da, b), mul(a, db))
                }
                BinaryOp::Div => {
                    let da = diff(&a, v)?;
                    let db = diff(&b, v)?;
                    // a'/b - a b' / b^2
                    sub(div(da, b.clone()), div(mul(a, db), b.clone() * b))
                }
                BinaryOp::Pow => {
                    if !b.is_closed() {
                        return Err(DiffError::NonConstantExponent(b.to_string()));
                    }
                    let da = diff(&a, v)?;
                    let lowered = match b.as_const() {
                        Some(c) => a.pow(Expr::Const(c - 1.0)),
                        None => a.pow(b.clone() - 1.0),
                    };
                    mul(mul(b, lowered), da)
                }
            }
        }
    })
}

/// Matrix of partial derivatives: entry `(i, j)` is `d f[i] / d vars[j]`.
pub fn jacobian<S: AsRef<str>>(f: &[Expr], vars: &[S]) -> Result<Vec<Vec<Expr>>, DiffError> {
    f.iter()
        .map(|fi| vars.iter().map(|v| fi.diff(v.as_ref())).collect())
        .collect()
}
