//! Compilation of a [`SystemSpec`] into a translinear block netlist.
//!
//! Each state becomes an integrating core whose capacitor current is
//!
//! ```text
//! I_Cin = I_Cin⁺ − I_Cin⁻ = (F⁺ − F⁻) · i_dc / D,   D = √(I_A·i_norm) + √(I_B·i_norm)
//! ```
//!
//! with `F⁺`, `F⁻` built from splitters, bilateral multipliers, mirrors,
//! constant sources and summers, and `D` from two root-square blocks.

mod build;
mod eval;
mod netlist;
mod poly;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::blocks::{BlockError, DeviceParams};
use crate::config::ElectricalConfig;
use crate::dsl::SystemSpec;
use crate::sim::compute_tau;

pub use build::synthesize;
pub use eval::{netlist_eval, CompiledNetlist};
pub use netlist::{emit_netlist, parse_netlist, Block, BlockKind, Net, NetRail, Netlist, PortRef, StateBinding};
pub use poly::{
    decompose_signed, expand, scale_to_currents, CurrentPoly, CurrentSystem, CurrentTerm, Monomial, Poly, Rail,
    RailPoly, RailTerm, Sign, MAX_DEGREE,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no {what} given for state `{state}`")]
    MissingScaling { what: &'static str, state: String },
    #[error("state `{state}`: cap/i_dc realize {realized:e} s per model unit, other states use {expected:e} s")]
    UnrealizableTau { state: String, realized: f64, expected: f64 },
    #[error("state `{state}`: monomial of degree {degree} is not supported (max {max})", max = MAX_DEGREE)]
    UnsupportedDegree { state: String, degree: usize },
    #[error("invalid scaling: {0}")]
    InvalidScaling(String),
    #[error("combinational cycle through blocks {0:?}")]
    Cycle(Vec<String>),
    #[error("net `{port}` went negative ({value:e} A) on a single-sided rail")]
    SignViolation { port: String, value: f64 },
    #[error("no value for input `{0}`")]
    MissingInput(String),
    #[error("divider `{0}` has a zero denominator")]
    DivisionByZero(String),
    #[error("invalid netlist: {0}")]
    InvalidNetlist(String),
    #[error("netlist JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("block `{id}`: {source}")]
    Block { id: String, source: BlockError },
}

/// Electrical scale of a synthesized system.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMap {
    /// Current standing for one model unit, A.
    pub i_unit: f64,
    /// Integrator scaling current per state, A.
    pub i_dc: BTreeMap<String, f64>,
    /// Integrating capacitor per state, F.
    pub cap: BTreeMap<String, f64>,
    /// Core quiescent current per state: `√I_A + √I_B = 2√i_core`, A.
    pub i_core: BTreeMap<String, f64>,
}

pub const DEFAULT_I_UNIT: f64 = 1e-6;
pub const DEFAULT_CAP: f64 = 800e-12;
pub const DEFAULT_I_DC: f64 = 80e-9;
/// Default core quiescent current in units of `i_unit`; the core can carry
/// `|I_out| < 4·i_core`.
pub const DEFAULT_CORE_RATIO: f64 = 2.0;

impl ScalingMap {
    /// Same capacitor everywhere, `i_dc` chosen so one model time unit
    /// lasts `time_unit` seconds.
    pub fn uniform(spec: &SystemSpec, p: &DeviceParams, i_unit: f64, cap: f64, time_unit: f64) -> Self {
        let mut sm = ScalingMap { i_unit, i_dc: BTreeMap::new(), cap: BTreeMap::new(), i_core: BTreeMap::new() };
        for s in &spec.states {
            sm.cap.insert(s.name.clone(), cap);
            sm.i_dc.insert(s.name.clone(), i_dc_for(p, cap, s.tau * time_unit));
            sm.i_core.insert(s.name.clone(), DEFAULT_CORE_RATIO * i_unit);
        }
        sm
    }

    /// Build from a configuration file's scaling entries.
    ///
    /// States lacking `i_dc` get one consistent with the first state that
    /// has it; with no `i_dc` at all the fastest state gets
    /// [`DEFAULT_I_DC`].
    pub fn from_config(spec: &SystemSpec, cfg: &ElectricalConfig) -> Result<Self, SynthError> {
        let p = &cfg.device;
        let i_unit = cfg.i_unit.unwrap_or(DEFAULT_I_UNIT);
        let cap_of = |name: &str| cfg.cap_state.get(name).copied().or(cfg.cap).unwrap_or(DEFAULT_CAP);

        let time_unit = match spec.states.iter().find(|s| cfg.i_dc.contains_key(&s.name)) {
            Some(s) => compute_tau(p, cap_of(&s.name), cfg.i_dc[&s.name]) / s.tau,
            None => {
                let fastest = spec.states.iter().min_by(|a, b| a.tau.total_cmp(&b.tau));
                fastest.map_or(1.0, |s| compute_tau(p, cap_of(&s.name), DEFAULT_I_DC) / s.tau)
            }
        };

        let mut sm = ScalingMap { i_unit, i_dc: BTreeMap::new(), cap: BTreeMap::new(), i_core: BTreeMap::new() };
        for s in &spec.states {
            let cap = cap_of(&s.name);
            let i_dc = cfg.i_dc.get(&s.name).copied().unwrap_or_else(|| i_dc_for(p, cap, s.tau * time_unit));
            let i_core = cfg.i_core.get(&s.name).copied().unwrap_or(DEFAULT_CORE_RATIO * i_unit);
            sm.cap.insert(s.name.clone(), cap);
            sm.i_dc.insert(s.name.clone(), i_dc);
            sm.i_core.insert(s.name.clone(), i_core);
        }
        Ok(sm)
    }

    pub(crate) fn check_covers(&self, spec: &SystemSpec) -> Result<(), SynthError> {
        if !(self.i_unit > 0.0 && self.i_unit.is_finite()) {
            return Err(SynthError::InvalidScaling(format!("i_unit must be positive, got {}", self.i_unit)));
        }
        for s in &spec.states {
            for (what, map) in [("i_dc", &self.i_dc), ("cap", &self.cap), ("i_core", &self.i_core)] {
                match map.get(&s.name) {
                    None => return Err(SynthError::MissingScaling { what, state: s.name.clone() }),
                    Some(v) if !(*v > 0.0 && v.is_finite()) => {
                        return Err(SynthError::InvalidScaling(format!("{what}.{} must be positive", s.name)))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Seconds per model time unit, common to every state.
    pub fn time_unit(&self, spec: &SystemSpec, p: &DeviceParams) -> Result<f64, SynthError> {
        self.check_covers(spec)?;
        let mut expected: Option<f64> = None;
        for s in &spec.states {
            let realized = compute_tau(p, self.cap[&s.name], self.i_dc[&s.name]) / s.tau;
            match expected {
                None => expected = Some(realized),
                Some(e) if ((realized - e) / e).abs() > 1e-9 => {
                    return Err(SynthError::UnrealizableTau { state: s.name.clone(), realized, expected: e })
                }
                Some(_) => {}
            }
        }
        Ok(expected.unwrap_or(1.0))
    }
}

/// Scaling current giving a physical time constant `tau_s` on capacitor `cap`.
pub fn i_dc_for(p: &DeviceParams, cap: f64, tau_s: f64) -> f64 {
    cap * p.slope_denominator_value() * p.i_norm.sqrt() / (2.0 * p.k_n().sqrt() * tau_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;

    fn fhn() -> SystemSpec {
        parse_system(include_str!("../../../../models/fhn.nds")).unwrap()
    }

    #[test]
    fn table_values_share_one_time_unit() {
        let spec = fhn();
        let cfg = ElectricalConfig::parse(include_str!("../../../../models/fhn.params")).unwrap();
        let sm = ScalingMap::from_config(&spec, &cfg).unwrap();
        let t0 = sm.time_unit(&spec, &cfg.device).unwrap();
        assert!((t0 - compute_tau(&cfg.device, 800e-12, 80e-9)).abs() < 1e-18);
    }

    #[test]
    fn derives_missing_bias_currents() {
        let spec = fhn();
        let cfg = ElectricalConfig::parse("cap = 800e-12\ni_dc.v = 80e-9\n").unwrap();
        let sm = ScalingMap::from_config(&spec, &cfg).unwrap();
        assert!((sm.i_dc["w"] - 6.4e-9).abs() < 1e-21);
        assert_eq!(sm.i_core["v"], 2e-6);
    }

    #[test]
    fn inconsistent_ratio_is_unrealizable() {
        let spec = fhn();
        let cfg = ElectricalConfig::parse("cap = 800e-12\ni_dc.v = 80e-9\ni_dc.w = 80e-9\n").unwrap();
        let sm = ScalingMap::from_config(&spec, &cfg).unwrap();
        let err = sm.time_unit(&spec, &cfg.device).unwrap_err();
        assert!(matches!(err, SynthError::UnrealizableTau { ref state, .. } if state == "w"), "{err}");
    }

    #[test]
    fn missing_entry_is_reported() {
        let spec = fhn();
        let mut sm = ScalingMap::uniform(&spec, &DeviceParams::default(), 1e-6, 1e-9, 1e-6);
        sm.cap.remove("w");
        let err = sm.time_unit(&spec, &DeviceParams::default()).unwrap_err();
        assert!(matches!(err, SynthError::MissingScaling { what: "cap", .. }));
    }

    #[test]
    fn realized_time_constant_identity() {
        let spec = fhn();
        let p = DeviceParams::default();
        let sm = ScalingMap::uniform(&spec, &p, 1e-6, 800e-12, 2.5e-4);
        for s in &spec.states {
            let realized = compute_tau(&p, sm.cap[&s.name], sm.i_dc[&s.name]);
            let want = s.tau * 2.5e-4;
            assert!(((realized - want) / want).abs() < 1e-12);
        }
    }
}
