//! The `.nds` model language.
//!
//! A model file declares one N-dimensional dynamical system:
//!
//! ```text
//! # comments run to end of line
//! system fhn {
//!     param a = 0.7;                  # named constant, inlined at parse time
//!     extern Iext = step(0, inf, 0.8); # constant, step(t_on, t_off, level) or pwl(t: v, ...)
//!     state v { init = -1.2; tau = 1; }
//!     state w { init = -0.6; tau = 12.5; }
//!     dv/dt = v - v^3/3 - w + Iext;
//!     dw/dt = v + a - 0.8*w;
//! }
//! ```
//!
//! The right-hand side of `dX/dt` is the state function `F_X`; the state
//! evolves as `tau * dX/dt = F_X`. Names must be declared before they are
//! used. Operators are `+ - * / ^` with the usual precedence; `/` takes a
//! nonzero constant divisor and `^` a positive integer literal exponent.

mod expr;
mod lexer;
mod parser;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{eval_expr, BoundExpr, EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("undeclared identifier `{name}` at {line}:{col}")]
    Undeclared { name: String, line: usize, col: usize },
    #[error("duplicate state `{name}` at {line}:{col}")]
    DuplicateState { name: String, line: usize, col: usize },
    #[error("`{name}` redeclared at {line}:{col}")]
    DuplicateName { name: String, line: usize, col: usize },
    #[error("exponent `{text}` at {line}:{col} is not a positive integer")]
    BadExponent { text: String, line: usize, col: usize },
    #[error("division by zero literal at {line}:{col}")]
    ZeroDivisor { line: usize, col: usize },
    #[error("divisor at {line}:{col} must be a constant")]
    NonConstantDivisor { line: usize, col: usize },
    #[error("derivative of `{name}` at {line}:{col}, which is not a declared state")]
    UnknownDerivativeTarget { name: String, line: usize, col: usize },
    #[error("second derivative line for `{name}` at {line}:{col}")]
    DuplicateDerivative { name: String, line: usize, col: usize },
    #[error("state `{name}` has no derivative line")]
    MissingDerivative { name: String },
    #[error("state `{name}`: {message}")]
    InvalidState { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub name: String,
    /// Initial value, dimensionless.
    pub init: f64,
    /// Time constant in model time units.
    pub tau: f64,
}

/// Time course of an external input, in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum Waveform {
    Constant(f64),
    /// `level` on `[t_on, t_off)`, zero elsewhere.
    Step {
        #[serde(with = "extended_f64")]
        t_on: f64,
        #[serde(with = "extended_f64")]
        t_off: f64,
        level: f64,
    },
    /// Linear between `(time, value)` knots, held flat outside them.
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// JSON has no infinities; open-ended step times are written as `"inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else if *x == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number, got `{t}`"))),
        }
    }
}

impl Waveform {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant(c) => *c,
            Waveform::Step { t_on, t_off, level } => {
                if t >= *t_on && t < *t_off {
                    *level
                } else {
                    0.0
                }
            }
            Waveform::PiecewiseLinear(pts) => {
                let (first, last) = (pts[0], pts[pts.len() - 1]);
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let k = pts.partition_point(|p| p.0 <= t);
                let (a, b) = (pts[k - 1], pts[k]);
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    /// The same waveform with time stretched by `time` and values by `value`.
    pub fn rescaled(&self, time: f64, value: f64) -> Waveform {
        match self {
            Waveform::Constant(c) => Waveform::Constant(c * value),
            Waveform::Step { t_on, t_off, level } => Waveform::Step {
                t_on: t_on * time,
                t_off: t_off * time,
                level: level * value,
            },
            Waveform::PiecewiseLinear(pts) => {
                Waveform::PiecewiseLinear(pts.iter().map(|(t, v)| (t * time, v * value)).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Waveform::Constant(c) if !c.is_finite() => Err("constant input must be finite".into()),
            Waveform::Step { t_on, t_off, level } => {
                if !level.is_finite() || t_on.is_nan() || t_off.is_nan() || t_off < t_on {
                    Err(format!("invalid step({t_on}, {t_off}, {level})"))
                } else {
                    Ok(())
                }
            }
            Waveform::PiecewiseLinear(pts) => {
                if pts.is_empty() {
                    return Err("pwl needs at least one point".into());
                }
                if pts.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err("pwl points must be finite".into());
                }
                if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err("pwl times must be strictly increasing".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn num(x: f64) -> String {
            if x == f64::INFINITY {
                "inf".into()
            } else if x == f64::NEG_INFINITY {
                "-inf".into()
            } else {
                x.to_string()
            }
        }
        match self {
            Waveform::Constant(c) => write!(f, "{}", num(*c)),
            Waveform::Step { t_on, t_off, level } => {
                write!(f, "step({}, {}, {})", num(*t_on), num(*t_off), num(*level))
            }
            Waveform::PiecewiseLinear(pts) => {
                let body: Vec<String> = pts.iter().map(|(t, v)| format!("{}: {}", num(*t), num(*v))).collect();
                write!(f, "pwl({})", body.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternDecl {
    pub name: String,
    pub waveform: Waveform,
}

/// A parsed and validated dynamical system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub states: Vec<StateDecl>,
    pub externals: Vec<ExternDecl>,
    /// State function per state, in state declaration order.
    pub derivatives: IndexMap<String, Expr>,
}

impl SystemSpec {
    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn extern_names(&self) -> Vec<&str> {
        self.externals.iter().map(|e| e.name.as_str()).collect()
    }

    /// States followed by externals: the slot order used by bound expressions.
    pub fn variable_names(&self) -> Vec<&str> {
        let mut v = self.state_names();
        v.extend(self.extern_names());
        v
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn extern_mut(&mut self, name: &str) -> Option<&mut ExternDecl> {
        self.externals.iter_mut().find(|e| e.name == name)
    }

    /// State functions bound to [`SystemSpec::variable_names`] slots.
    pub fn bound_derivatives(&self) -> Vec<BoundExpr> {
        let slots = self.variable_names();
        self.derivatives
            .values()
            .map(|e| e.bind(&slots).expect("parser resolves every identifier"))
            .collect()
    }

    pub fn tau_min(&self) -> f64 {
        self.states.iter().map(|s| s.tau).fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system {} {{", self.name)?;
        for e in &self.externals {
            writeln!(f, "    extern {} = {};", e.name, e.waveform)?;
        }
        for s in &self.states {
            writeln!(f, "    state {} {{ init = {}; tau = {}; }}", s.name, s.init, s.tau)?;
        }
        for (name, e) in &self.derivatives {
            writeln!(f, "    d{name}/dt = {e};")?;
        }
        writeln!(f, "}}")
    }
}

/// Parse `.nds` source into a validated [`SystemSpec`].
pub fn parse_system(source: &str) -> Result<SystemSpec, DslError> {
    parser::parse(source)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FHN: &str = include_str!("../../../../models/fhn.nds");

    #[test]
    fn parses_bundled_fhn() {
        let spec = parse_system(FHN).unwrap();
        assert_eq!(spec.name, "fhn");
        assert_eq!(spec.state_names(), ["v", "w"]);
        assert_eq!(spec.extern_names(), ["Iext"]);
        assert_eq!(spec.derivatives["v"].to_string(), "v - v^3 / 3 - w + Iext");
        assert_eq!(spec.states[1].tau, 12.5);
    }

    #[test]
    fn identity_system() {
        let spec = parse_system("system s { state x { init=0; tau=1; } dx/dt = x; }").unwrap();
        assert_eq!(spec.states.len(), 1);
        assert_eq!(spec.derivatives["x"], Expr::var("x"));
    }

    #[test]
    fn undeclared_identifier() {
        let err = parse_system("system s { state x { init=0; tau=1; } dx/dt = y; }").unwrap_err();
        assert_eq!(err, DslError::Undeclared { name: "y".into(), line: 1, col: 47 });
    }

    #[test]
    fn duplicate_state() {
        let src = "system s {\n state x { tau=1; }\n state x { tau=2; }\n dx/dt = x; }";
        assert!(matches!(parse_system(src), Err(DslError::DuplicateState { line: 3, .. })));
    }

    #[test]
    fn non_integer_exponent() {
        let src = "system s { state x { tau=1; } dx/dt = x^2.5; }";
        assert!(matches!(parse_system(src), Err(DslError::BadExponent { .. })));
        let src = "system s { state x { tau=1; } dx/dt = x^0; }";
        assert!(matches!(parse_system(src), Err(DslError::BadExponent { .. })));
    }

    #[test]
    fn zero_and_variable_divisors() {
        let src = "system s { state x { tau=1; } dx/dt = x/0; }";
        assert!(matches!(parse_system(src), Err(DslError::ZeroDivisor { .. })));
        let src = "system s { state x { tau=1; } dx/dt = 1/x; }";
        assert!(matches!(parse_system(src), Err(DslError::NonConstantDivisor { .. })));
        let src = "system s { param k = 4; state x { tau=1; } dx/dt = x/k; }";
        assert_eq!(parse_system(src).unwrap().derivatives["x"], Expr::Div(Box::new(Expr::var("x")), 4.0));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_system("system s {\n  state x { tau=1; }\n  dx/dt = x +;\n}").unwrap_err();
        assert!(matches!(err, DslError::Syntax { line: 3, col: 14, .. }), "{err:?}");
    }

    #[test]
    fn missing_and_duplicate_derivatives() {
        let err = parse_system("system s { state x { tau=1; } }").unwrap_err();
        assert_eq!(err, DslError::MissingDerivative { name: "x".into() });
        let err = parse_system("system s { state x { tau=1; } dx/dt = 1; dx/dt = 2; }").unwrap_err();
        assert!(matches!(err, DslError::DuplicateDerivative { .. }));
    }

    #[test]
    fn rejects_nonpositive_tau() {
        let err = parse_system("system s { state x { tau=0; } dx/dt = 1; }").unwrap_err();
        assert!(matches!(err, DslError::InvalidState { .. }));
    }

    #[test]
    fn unary_minus_and_power_precedence() {
        let spec = parse_system("system s { state x { tau=1; } dx/dt = -2^2 + -x; }").unwrap();
        let v = eval_expr(&spec.derivatives["x"], &[("x".to_string(), 1.0)].into()).unwrap();
        assert_eq!(v, -5.0);
    }

    #[test]
    fn waveforms() {
        let step = Waveform::Step { t_on: 1.0, t_off: 2.0, level: 0.8 };
        assert_eq!(step.value_at(0.5), 0.0);
        assert_eq!(step.value_at(1.0), 0.8);
        assert_eq!(step.value_at(2.0), 0.0);
        let pwl = Waveform::PiecewiseLinear(vec![(0.0, 0.0), (2.0, 1.0)]);
        assert_eq!(pwl.value_at(1.0), 0.5);
        assert_eq!(pwl.value_at(5.0), 1.0);
        let src = "system s { extern u = pwl(0: 0, 2: 1); extern k = step(0, inf, 0.8); \
                   state x { tau=1; } dx/dt = u + k; }";
        let spec = parse_system(src).unwrap();
        assert_eq!(spec.externals[0].waveform, pwl);
        assert_eq!(spec.externals[1].waveform, Waveform::Step { t_on: 0.0, t_off: f64::INFINITY, level: 0.8 });
    }

    #[test]
    fn printed_fhn_reparses_identically() {
        let spec = parse_system(FHN).unwrap();
        assert_eq!(parse_system(&spec.to_string()).unwrap(), spec);
    }
}
