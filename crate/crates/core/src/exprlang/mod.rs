//! Scalar expressions over named real variables.
//!
//! Every map, vector field and Jacobian in the crate is built from [`Expr`]
//! trees. Trees are immutable and share subtrees through [`Arc`], so
//! substitution only allocates along the paths that actually change.
//!
//! ```
//! use opennet::exprlang::{parse, Expr};
//! use std::collections::HashMap;
//!
//! let e = parse("x^2 + sin(y)", &["x", "y"]).unwrap();
//! let env = HashMap::from([("x", 2.0), ("y", 0.0)]);
//! assert_eq!(e.eval(&env).unwrap(), 4.0);
//! let de = e.diff("x").unwrap();
//! assert_eq!(de.eval(&env).unwrap(), 4.0);
//! ```

mod diff;
mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::borrow::Borrow;
use std::sync::Arc;

use thiserror::Error;

pub use diff::jacobian;
pub use parse::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

impl UnaryOp {
    /// Function-call name, `None` for prefix negation.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Tanh => Some("tanh"),
            UnaryOp::Sqrt => Some("sqrt"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "tanh" => UnaryOp::Tanh,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        let y = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::Domain { op: "sqrt", arg: x });
                }
                x.sqrt()
            }
        };
        finite(y, self.label())
    }

    fn label(self) -> &'static str {
        self.function_name().unwrap_or("neg")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let y = match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a / b
            }
            BinaryOp::Pow => {
                if a == 0.0 && b < 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                let y = a.powf(b);
                if y.is_nan() {
                    return Err(EvalError::Domain { op: "pow", arg: a });
                }
                y
            }
        };
        finite(y, self.label())
    }

    fn label(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }
}

fn finite(y: f64, op: &'static str) -> Result<f64, EvalError> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(EvalError::Overflow { op })
    }
}

/// A scalar expression tree.
///
/// Derived equality is syntactic. Two expressions describing the same
/// function may compare unequal; semantic agreement is checked by sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Arc<str>),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error in {op} at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite result in {op}")]
    Overflow { op: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("cannot differentiate a power with non-constant exponent `{0}`")]
    NonConstantExponent(String),
}

/// Variable bindings for evaluation.
pub trait Env {
    fn value(&self, name: &str) -> Option<f64>;
}

impl<K, S> Env for HashMap<K, f64, S>
where
    K: Borrow<str> + Hash + Eq,
    S: std::hash::BuildHasher,
{
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<K: Borrow<str> + Ord> Env for BTreeMap<K, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Positional bindings: `names[i]` takes `values[i]`.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a, S> {
    pub names: &'a [S],
    pub values: &'a [f64],
}

impl<'a, S: AsRef<str>> Point<'a, S> {
    pub fn new(names: &'a [S], values: &'a [f64]) -> Self {
        debug_assert_eq!(names.len(), values.len());
        Point { names, values }
    }
}

impl<S: AsRef<str>> Env for Point<'_, S> {
    fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n.as_ref() == name)
            .map(|i| self.values[i])
    }
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(Arc::from(name))
    }

    /// Builds a unary node, folding it when the operand is a literal.
    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        if let Expr::Const(x) = a {
            if let Ok(y) = op.apply(x) {
                return Expr::Const(y);
            }
        }
        Expr::Unary(op, Arc::new(a))
    }

    /// Builds a binary node, folding it when both operands are literals.
    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
            if let Ok(z) = op.apply(*x, *y) {
                return Expr::Const(z);
            }
        }
        Expr::Binary(op, Arc::new(a), Arc::new(b))
    }

    pub fn pow(self, exponent: Expr) -> Self {
        Expr::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn sin(self) -> Self {
        Expr::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Self {
        Expr::unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Self {
        Expr::unary(UnaryOp::Exp, self)
    }

    pub fn tanh(self) -> Self {
        Expr::unary(UnaryOp::Tanh, self)
    }

    pub fn sqrt(self) -> Self {
        Expr::unary(UnaryOp::Sqrt, self)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(name) => Some(name),
            _ => None,
        }
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => env
                .value(name)
                .ok_or_else(|| EvalError::Unbound(name.to_string())),
            Expr::Unary(op, a) => op.apply(a.eval(env)?),
            Expr::Binary(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                op.apply(x, y)
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.to_string());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => &**v == name,
            Expr::Unary(_, a) => a.depends_on(name),
            Expr::Binary(_, a, b) => a.depends_on(name) || b.depends_on(name),
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Unary(_, a) => a.is_closed(),
            Expr::Binary(_, a, b) => a.is_closed() && b.is_closed(),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Simultaneous substitution of variables. Unmapped variables are kept.
    pub fn substitute<K>(&self, map: &HashMap<K, Expr>) -> Expr
    where
        K: Borrow<str> + Hash + Eq,
    {
        self.subst_inner(map).unwrap_or_else(|| self.clone())
    }

    // `None` means the subtree is unchanged and can be shared.
    fn subst_inner<K>(&self, map: &HashMap<K, Expr>) -> Option<Expr>
    where
        K: Borrow<str> + Hash + Eq,
    {
        match self {
            Expr::Const(_) => None,
            Expr::Var(name) => map.get(&**name).cloned(),
            Expr::Unary(op, a) => a
                .subst_inner(map)
                .map(|a2| Expr::Unary(*op, Arc::new(a2))),
            Expr::Binary(op, a, b) => {
                let a2 = a.subst_inner(map);
                let b2 = b.subst_inner(map);
                if a2.is_none() && b2.is_none() {
                    return None;
                }
                let a2 = a2.map(Arc::new).unwrap_or_else(|| a.clone());
                let b2 = b2.map(Arc::new).unwrap_or_else(|| b.clone());
                Some(Expr::Binary(*op, a2, b2))
            }
        }
    }

    /// Positional substitution: `names[i]` is replaced by `values[i]`.
    pub fn substitute_positional<S: AsRef<str>>(&self, names: &[S], values: &[Expr]) -> Expr {
        let map: HashMap<&str, Expr> = names
            .iter()
            .map(AsRef::as_ref)
            .zip(values.iter().cloned())
            .collect();
        self.substitute(&map)
    }

    /// Prepends `prefix` to every variable name.
    pub fn prefixed(&self, prefix: &str) -> Expr {
        let map: HashMap<String, Expr> = self
            .free_vars()
            .into_iter()
            .map(|v| {
                let renamed = Expr::var(&format!("{prefix}{v}"));
                (v, renamed)
            })
            .collect();
        self.substitute(&map)
    }

    /// Partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Result<Expr, DiffError> {
        diff::diff(self, var)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl std::ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinaryOp::Add);
impl_binop!(Sub, sub, BinaryOp::Sub);
impl_binop!(Mul, mul, BinaryOp::Mul);
impl_binop!(Div, div, BinaryOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

/// Evaluates a vector of expressions at one point.
pub fn eval_all<E: Env + ?Sized>(exprs: &[Expr], env: &E) -> Result<Vec<f64>, EvalError> {
    exprs.iter().map(|e| e.eval(env)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn eval_basic() {
        let e = parse("x^2 + sin(y)", &["x", "y"]).unwrap();
        assert_eq!(e.eval(&env(&[("x", 2.0), ("y", 0.0)])).unwrap(), 4.0);
        let e = parse("exp(0)", &[] as &[&str]).unwrap();
        assert_eq!(e.eval(&env(&[])).unwrap(), 1.0);
    }

    #[test]
    fn eval_errors() {
        let e = parse("x/y", &["x", "y"]).unwrap();
        assert_eq!(
            e.eval(&env(&[("x", 1.0), ("y", 0.0)])),
            Err(EvalError::DivisionByZero)
        );
        let e = parse("sqrt(x)", &["x"]).unwrap();
        assert!(matches!(
            e.eval(&env(&[("x", -1.0)])),
            Err(EvalError::Domain { op: "sqrt", .. })
        ));
        let e = parse("x + z", &["x", "z"]).unwrap();
        assert_eq!(
            e.eval(&env(&[("x", 1.0)])),
            Err(EvalError::Unbound("z".into()))
        );
        let e = parse("exp(exp(x))", &["x"]).unwrap();
        assert!(matches!(
            e.eval(&env(&[("x", 10.0)])),
            Err(EvalError::Overflow { .. })
        ));
    }

    #[test]
    fn literal_subtrees_fold() {
        let e = parse("2*3 + x", &["x"]).unwrap();
        match e {
            Expr::Binary(BinaryOp::Add, a, _) => assert_eq!(*a, Expr::Const(6.0)),
            other => panic!("unexpected {other:?}"),
        }
        // 1/0 is not folded so the error surfaces at evaluation time
        let e = parse("1/0", &[] as &[&str]).unwrap();
        assert!(matches!(e, Expr::Binary(BinaryOp::Div, _, _)));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x - y", &["x", "y"]).unwrap();
        let swapped = e.substitute_positional(&["x", "y"], &[Expr::var("y"), Expr::var("x")]);
        assert_eq!(swapped.eval(&env(&[("x", 5.0), ("y", 2.0)])).unwrap(), -3.0);
    }

    #[test]
    fn prefixing_renames_every_variable() {
        let e = parse("x*y + x", &["x", "y"]).unwrap();
        let p = e.prefixed("n0.");
        assert_eq!(
            p.free_vars().into_iter().collect::<Vec<_>>(),
            vec!["n0.x".to_string(), "n0.y".to_string()]
        );
    }

    #[test]
    fn point_env_is_positional() {
        let names = ["a", "b"];
        let vals = [1.5, -2.0];
        let e = parse("a*b", &names).unwrap();
        assert_eq!(e.eval(&Point::new(&names, &vals)).unwrap(), -3.0);
    }
}
