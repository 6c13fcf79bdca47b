use std::fmt;

use super::{BinaryOp, Expr, UnaryOp};

// Binding strength, matching the parser.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const PREFIX: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn strength(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREFIX,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Unary(UnaryOp::Neg, _) => PREFIX,
        Expr::Unary(_, _) => ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => PRODUCT,
        Expr::Binary(BinaryOp::Pow, _, _) => POWER,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints text that parses back to a tree with identical floating-point
/// behaviour. Parentheses are kept wherever dropping them would re-associate
/// an operation.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` is the shortest representation that round-trips exactly.
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                child(f, a, strength(a) < PREFIX)
            }
            Expr::Unary(op, a) => {
                write!(f, "{}({a})", op.function_name().unwrap_or_default())
            }
            Expr::Binary(BinaryOp::Pow, a, b) => {
                child(f, a, strength(a) <= POWER)?;
                f.write_str("^")?;
                child(f, b, strength(b) < PREFIX)
            }
            Expr::Binary(op, a, b) => {
                let own = strength(self);
                child(f, a, strength(a) < own)?;
                write!(f, " {} ", op.symbol())?;
                child(f, b, strength(b) <= own)
            }
        }
    }
}
