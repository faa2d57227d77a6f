//! Polynomial form of state functions, current scaling and rail splitting.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;

use super::{ScalingMap, SynthError};
use crate::dsl::{Expr, SystemSpec};

/// Highest monomial degree the block library realizes.
pub const MAX_DEGREE: usize = 3;

/// Variable indices with multiplicity, sorted: `[0, 0, 1]` is `x0²·x1`.
pub type Monomial = Vec<usize>;

/// Sparse polynomial over dimensionless model variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(pub BTreeMap<Monomial, f64>);

impl Poly {
    fn constant(c: f64) -> Self {
        let mut m = BTreeMap::new();
        if c != 0.0 {
            m.insert(Vec::new(), c);
        }
        Poly(m)
    }

    fn variable(i: usize) -> Self {
        Poly(BTreeMap::from([(vec![i], 1.0)]))
    }

    fn add_scaled(mut self, other: &Poly, k: f64) -> Self {
        for (mono, c) in &other.0 {
            let e = self.0.entry(mono.clone()).or_insert(0.0);
            *e += k * c;
            if *e == 0.0 {
                self.0.remove(mono);
            }
        }
        self
    }

    fn scale(mut self, k: f64) -> Self {
        self.0.values_mut().for_each(|c| *c *= k);
        self.0.retain(|_, c| *c != 0.0);
        self
    }

    fn mul(&self, other: &Poly) -> Result<Self, usize> {
        let mut out = Poly::default();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                let mut mono: Monomial = ma.iter().chain(mb).copied().collect();
                if mono.len() > MAX_DEGREE {
                    return Err(mono.len());
                }
                mono.sort_unstable();
                *out.0.entry(mono).or_insert(0.0) += ca * cb;
            }
        }
        out.0.retain(|_, c| *c != 0.0);
        Ok(out)
    }

    pub fn degree(&self) -> usize {
        self.0.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|(m, c)| c * m.iter().map(|&i| x[i]).product::<f64>()).sum()
    }
}

/// Expand `e` into a polynomial over `slots`.
///
/// Fails with the offending degree as soon as any product exceeds
/// [`MAX_DEGREE`].
pub fn expand(e: &Expr, slots: &[&str]) -> Result<Poly, usize> {
    Ok(match e {
        Expr::Const(c) => Poly::constant(*c),
        Expr::Var(name) => {
            let i = slots.iter().position(|s| s == name).expect("identifiers are resolved by the parser");
            Poly::variable(i)
        }
        Expr::Add(a, b) => expand(a, slots)?.add_scaled(&expand(b, slots)?, 1.0),
        Expr::Sub(a, b) => expand(a, slots)?.add_scaled(&expand(b, slots)?, -1.0),
        Expr::Mul(a, b) => expand(a, slots)?.mul(&expand(b, slots)?)?,
        Expr::Neg(a) => expand(a, slots)?.scale(-1.0),
        Expr::Div(a, d) => expand(a, slots)?.scale(1.0 / d),
        Expr::Pow(a, k) => {
            let base = expand(a, slots)?;
            let mut acc = Poly::constant(1.0);
            for _ in 0..*k {
                acc = acc.mul(&base)?;
            }
            acc
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn of(c: f64) -> Sign {
        if c < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One monomial of a current-valued state function:
/// `sign · scale · Π I_vars / Π norms`.
///
/// Constants carry their current in `scale`; degree-one terms carry the
/// coefficient magnitude in `scale` (a mirror ratio); higher-degree terms
/// have `scale = 1` and fold the coefficient into the last normalization
/// current, so `−v³/3` becomes `−I_v³ / (1 µA · 3 µA)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentTerm {
    pub sign: Sign,
    pub scale: f64,
    pub vars: Monomial,
    pub norms: Vec<f64>,
}

impl CurrentTerm {
    pub fn eval(&self, currents: &[f64]) -> f64 {
        let num: f64 = self.vars.iter().map(|&i| currents[i]).product();
        let den: f64 = self.norms.iter().product();
        self.sign.value() * self.scale * num / den
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentPoly {
    pub terms: Vec<CurrentTerm>,
}

impl CurrentPoly {
    pub fn eval(&self, currents: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(currents)).sum()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.vars.len()).max().unwrap_or(0)
    }
}

/// State functions rewritten over currents (`I_x = x · i_unit`).
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSystem {
    /// States, then externals.
    pub variables: Vec<String>,
    pub i_unit: f64,
    pub functions: IndexMap<String, CurrentPoly>,
}

impl CurrentSystem {
    pub fn eval(&self, state: &str, currents: &[f64]) -> Option<f64> {
        self.functions.get(state).map(|f| f.eval(currents))
    }
}

impl fmt::Display for CurrentSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (state, poly) in &self.functions {
            write!(f, "F_{state} =")?;
            if poly.terms.is_empty() {
                write!(f, " 0")?;
            }
            for (k, t) in poly.terms.iter().enumerate() {
                let op = match (k, t.sign) {
                    (0, Sign::Plus) => " ",
                    (0, Sign::Minus) => " -",
                    (_, Sign::Plus) => " + ",
                    (_, Sign::Minus) => " - ",
                };
                write!(f, "{op}")?;
                if t.vars.is_empty() {
                    write!(f, "{:e} A", t.scale)?;
                    continue;
                }
                if t.scale != 1.0 {
                    write!(f, "{}*", t.scale)?;
                }
                let names: Vec<String> = t.vars.iter().map(|&i| format!("I_{}", self.variables[i])).collect();
                write!(f, "{}", names.join("*"))?;
                if !t.norms.is_empty() {
                    let norms: Vec<String> = t.norms.iter().map(|n| format!("{n:e}")).collect();
                    write!(f, "/({})", norms.join("*"))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Rewrite every state function of `spec` over currents.
pub fn scale_to_currents(spec: &SystemSpec, sm: &ScalingMap) -> Result<CurrentSystem, SynthError> {
    sm.check_covers(spec)?;
    let slots = spec.variable_names();
    let i_unit = sm.i_unit;
    let mut functions = IndexMap::new();
    for (state, e) in &spec.derivatives {
        let poly = expand(e, &slots).map_err(|degree| SynthError::UnsupportedDegree { state: state.clone(), degree })?;
        let mut terms = Vec::with_capacity(poly.0.len());
        for (vars, c) in poly.0 {
            let (scale, norms) = match vars.len() {
                0 => (c.abs() * i_unit, Vec::new()),
                1 => (c.abs(), Vec::new()),
                k => {
                    let mut norms = vec![i_unit; k - 1];
                    norms[k - 2] = i_unit / c.abs();
                    (1.0, norms)
                }
            };
            terms.push(CurrentTerm { sign: Sign::of(c), scale, vars, norms });
        }
        functions.insert(state.clone(), CurrentPoly { terms });
    }
    Ok(CurrentSystem { variables: slots.iter().map(|s| s.to_string()).collect(), i_unit, functions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rail {
    Plus,
    Minus,
}

/// A nonnegative product of rail currents: `scale · Π rail / Π norms`.
#[derive(Debug, Clone, PartialEq)]
pub struct RailTerm {
    pub scale: f64,
    pub rails: Vec<(usize, Rail)>,
    pub norms: Vec<f64>,
}

impl RailTerm {
    pub fn eval(&self, rails: &[(f64, f64)]) -> f64 {
        let num: f64 = self
            .rails
            .iter()
            .map(|&(i, r)| match r {
                Rail::Plus => rails[i].0,
                Rail::Minus => rails[i].1,
            })
            .product();
        let den: f64 = self.norms.iter().product();
        self.scale * num / den
    }
}

/// `F = F⁺ − F⁻` with both sides sums of nonnegative rail products.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RailPoly {
    pub plus: Vec<RailTerm>,
    pub minus: Vec<RailTerm>,
}

impl RailPoly {
    /// `(F⁺, F⁻)` for rails given as `(x⁺, x⁻)` per variable.
    pub fn eval(&self, rails: &[(f64, f64)]) -> (f64, f64) {
        let side = |terms: &[RailTerm]| terms.iter().map(|t| t.eval(rails)).sum::<f64>();
        (side(&self.plus), side(&self.minus))
    }
}

/// Expand a current polynomial over split rails.
///
/// Every signed factor `I = I⁺ − I⁻` is multiplied out; a product with an
/// odd number of negative rails lands on the opposite side of its term's
/// sign, matching the bilateral multiplier's sign rule.
pub fn decompose_signed(f: &CurrentPoly) -> RailPoly {
    let mut out = RailPoly::default();
    for t in &f.terms {
        let k = t.vars.len();
        for mask in 0u32..(1 << k) {
            let rails: Vec<(usize, Rail)> = t
                .vars
                .iter()
                .enumerate()
                .map(|(j, &v)| (v, if mask & (1 << j) != 0 { Rail::Minus } else { Rail::Plus }))
                .collect();
            let side = if mask.count_ones() % 2 == 1 { t.sign.flip() } else { t.sign };
            let term = RailTerm { scale: t.scale, rails, norms: t.norms.clone() };
            match side {
                Sign::Plus => out.plus.push(term),
                Sign::Minus => out.minus.push(term),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;

    const UA: f64 = 1e-6;

    fn unit_map(spec: &SystemSpec) -> ScalingMap {
        ScalingMap::uniform(spec, &crate::blocks::DeviceParams::default(), UA, 800e-12, 1e-3)
    }

    #[test]
    fn expansion_of_binomial_cube() {
        let spec = parse_system("system s { state x{tau=1;} state y{tau=1;} dx/dt = (x - y)^3; dy/dt = 0; }").unwrap();
        let p = expand(&spec.derivatives["x"], &["x", "y"]).unwrap();
        assert_eq!(p.0.len(), 4);
        assert_eq!(p.0[&vec![0, 0, 1]], -3.0);
        assert_eq!(p.0[&vec![0, 1, 1]], 3.0);
        assert!(expand(&spec.derivatives["y"], &["x", "y"]).unwrap().0.is_empty());
    }

    #[test]
    fn rejects_quartic() {
        let spec = parse_system("system s { state x{tau=1;} dx/dt = x^2 * x^2; }").unwrap();
        let err = scale_to_currents(&spec, &unit_map(&spec)).unwrap_err();
        assert!(matches!(err, SynthError::UnsupportedDegree { degree: 4, .. }), "{err:?}");
    }

    #[test]
    fn fhn_current_form() {
        let spec = parse_system(include_str!("../../../../models/fhn.nds")).unwrap();
        let cs = scale_to_currents(&spec, &unit_map(&spec)).unwrap();
        let fv = &cs.functions["v"];
        let cube = fv.terms.iter().find(|t| t.vars == [0, 0, 0]).unwrap();
        assert_eq!(cube.sign, Sign::Minus);
        // I_v^3 / (I_x * I_b) with I_x = 1 µA and I_b = 3 µA
        assert!((cube.norms[0] - 1.0 * UA).abs() < 1e-18);
        assert!((cube.norms[1] - 3.0 * UA).abs() < 1e-18);

        let fw = &cs.functions["w"];
        let ic = fw.terms.iter().find(|t| t.vars.is_empty()).unwrap();
        assert!((ic.scale - 0.7 * UA).abs() < 1e-18);
        let id = fw.terms.iter().find(|t| t.vars == [1]).unwrap();
        assert_eq!((id.sign, id.scale), (Sign::Minus, 0.8));

        // F_v = I_v − I_v³/(I_b I_x) − I_w + I_ext at arbitrary currents
        let i = [0.7 * UA, -0.3 * UA, 0.25 * UA];
        let want = i[0] - i[0].powi(3) / (3.0 * UA * UA) - i[1] + i[2];
        assert!((fv.eval(&i) - want).abs() < 1e-12 * UA);
    }

    #[test]
    fn identity_needs_no_normalization() {
        let spec = parse_system("system s { state x{tau=1;} dx/dt = x; }").unwrap();
        let cs = scale_to_currents(&spec, &unit_map(&spec)).unwrap();
        let t = &cs.functions["x"].terms[0];
        assert_eq!((t.sign, t.scale, t.norms.len()), (Sign::Plus, 1.0, 0));
    }

    #[test]
    fn square_matches_dimensionless_evaluation() {
        let spec = parse_system("system s { state x{tau=1;} dx/dt = x^2; }").unwrap();
        let cs = scale_to_currents(&spec, &unit_map(&spec)).unwrap();
        let got = cs.functions["x"].eval(&[2.0 * UA]);
        let env = [("x".to_string(), 2.0)].into();
        let want = crate::dsl::eval_expr(&spec.derivatives["x"], &env).unwrap() * UA;
        assert!((got - 4.0 * UA).abs() < 1e-18);
        assert!((got - want).abs() < 1e-18);
    }

    #[test]
    fn linear_sign_split() {
        let spec = parse_system("system s { state v{tau=1;} state w{tau=1;} dv/dt = v - w; dw/dt = 2; }").unwrap();
        let cs = scale_to_currents(&spec, &unit_map(&spec)).unwrap();
        let rp = decompose_signed(&cs.functions["v"]);
        let names = |ts: &[RailTerm]| ts.iter().map(|t| t.rails.clone()).collect::<Vec<_>>();
        assert_eq!(names(&rp.plus), vec![vec![(0, Rail::Plus)], vec![(1, Rail::Minus)]]);
        assert_eq!(names(&rp.minus), vec![vec![(0, Rail::Minus)], vec![(1, Rail::Plus)]]);

        let rc = decompose_signed(&cs.functions["w"]);
        assert_eq!(rc.minus.len(), 0);
        assert!((rc.eval(&[]).0 - 2.0 * UA).abs() < 1e-18);
    }

    #[test]
    fn negated_cube_on_negative_input() {
        let f = CurrentPoly {
            terms: vec![CurrentTerm { sign: Sign::Minus, scale: 1.0, vars: vec![0, 0, 0], norms: vec![UA, 3.0 * UA] }],
        };
        let rp = decompose_signed(&f);
        let (p, m) = rp.eval(&[(0.0, UA)]);
        // −(−1 µA)³ / (1 µA · 3 µA) = +1/3 µA
        assert!((p - m - UA / 3.0).abs() < 1e-18);
        assert!(p >= 0.0 && m >= 0.0);
    }
}
