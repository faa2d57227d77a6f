//! Expression trees for model right-hand sides.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Right-hand side expression of a state equation.
///
/// Division only ever takes a nonzero literal denominator and powers only
/// take positive integer exponents, so every `Expr` is a polynomial in its
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, f64),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` is not in the binding list")]
    UnknownSlot(String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    /// Every distinct variable name, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit_vars(&mut |name| {
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }

    fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => f(name),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Neg(a) | Expr::Div(a, _) | Expr::Pow(a, _) => a.visit_vars(f),
        }
    }

    /// Polynomial degree of the tree, counting every variable as degree one.
    /// Cancellation is not detected: `x^2 - x^2` reports degree 2.
    pub fn degree(&self) -> u32 {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) => a.degree().max(b.degree()),
            Expr::Mul(a, b) => a.degree() + b.degree(),
            Expr::Neg(a) | Expr::Div(a, _) => a.degree(),
            Expr::Pow(a, k) => a.degree().saturating_mul(*k),
        }
    }

    /// Resolve variable names to slot indices for repeated evaluation.
    pub fn bind(&self, slots: &[&str]) -> Result<BoundExpr, EvalError> {
        let node = match self {
            Expr::Const(c) => BoundExpr::Const(*c),
            Expr::Var(name) => {
                let idx = slots
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| EvalError::UnknownSlot(name.clone()))?;
                BoundExpr::Slot(idx)
            }
            Expr::Add(a, b) => BoundExpr::Add(Box::new(a.bind(slots)?), Box::new(b.bind(slots)?)),
            Expr::Sub(a, b) => BoundExpr::Sub(Box::new(a.bind(slots)?), Box::new(b.bind(slots)?)),
            Expr::Mul(a, b) => BoundExpr::Mul(Box::new(a.bind(slots)?), Box::new(b.bind(slots)?)),
            Expr::Neg(a) => BoundExpr::Neg(Box::new(a.bind(slots)?)),
            Expr::Div(a, d) => BoundExpr::Div(Box::new(a.bind(slots)?), *d),
            Expr::Pow(a, k) => BoundExpr::Pow(Box::new(a.bind(slots)?), *k),
        };
        Ok(node)
    }
}

/// Evaluate `e` in double precision with variables taken from `env`.
pub fn eval_expr(e: &Expr, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Const(c) => *c,
        Expr::Var(name) => *env.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
        Expr::Add(a, b) => eval_expr(a, env)? + eval_expr(b, env)?,
        Expr::Sub(a, b) => eval_expr(a, env)? - eval_expr(b, env)?,
        Expr::Mul(a, b) => eval_expr(a, env)? * eval_expr(b, env)?,
        Expr::Neg(a) => -eval_expr(a, env)?,
        Expr::Div(a, d) => eval_expr(a, env)? / d,
        Expr::Pow(a, k) => powi(eval_expr(a, env)?, *k),
    })
}

fn powi(x: f64, k: u32) -> f64 {
    // repeated multiplication keeps results identical across evaluators
    let mut acc = 1.0;
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// An [`Expr`] whose variables were resolved to positions in a slice.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    Const(f64),
    Slot(usize),
    Add(Box<BoundExpr>, Box<BoundExpr>),
    Sub(Box<BoundExpr>, Box<BoundExpr>),
    Mul(Box<BoundExpr>, Box<BoundExpr>),
    Neg(Box<BoundExpr>),
    Div(Box<BoundExpr>, f64),
    Pow(Box<BoundExpr>, u32),
}

impl BoundExpr {
    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            BoundExpr::Const(c) => *c,
            BoundExpr::Slot(i) => values[*i],
            BoundExpr::Add(a, b) => a.eval(values) + b.eval(values),
            BoundExpr::Sub(a, b) => a.eval(values) - b.eval(values),
            BoundExpr::Mul(a, b) => a.eval(values) * b.eval(values),
            BoundExpr::Neg(a) => -a.eval(values),
            BoundExpr::Div(a, d) => a.eval(values) / d,
            BoundExpr::Pow(a, k) => powi(a.eval(values), *k),
        }
    }
}

// Binding strength used by the printer; higher binds tighter.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if c.is_sign_negative() => 3,
        Expr::Const(_) | Expr::Var(_) => 5,
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    // `Display` for f64 is the shortest representation that parses back exactly
    write!(f, "{c}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_const(f, *c),
            Expr::Var(name) => f.write_str(name),
            Expr::Add(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" + ")?;
                write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" - ")?;
                write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str(" * ")?;
                write_operand(f, b, 3)
            }
            Expr::Div(a, d) => {
                write_operand(f, a, 2)?;
                f.write_str(" / ")?;
                write_const(f, *d)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                // `-(-2)` must not print as `--2`, which reparses as a literal
                if matches!(**a, Expr::Const(_)) {
                    write!(f, "({a})")
                } else {
                    write_operand(f, a, 3)
                }
            }
            Expr::Pow(a, k) => {
                write_operand(f, a, 5)?;
                write!(f, "^{k}")
            }
        }
    }
}
