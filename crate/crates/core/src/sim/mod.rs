//! Fixed-step simulation of the reference ODE, the block-level circuit and
//! the device-level cores.

mod tiers;
mod trace;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::blocks::{BlockError, DeviceParams};
use crate::synth::SynthError;

pub use tiers::{simulate_circuit, simulate_device, simulate_reference};
pub use trace::{Tier, Trace, Units};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("state `{state}` diverged at t = {t:e}")]
    Diverged { state: String, t: f64 },
    #[error("core `{state}` at t = {t:e}: {source}")]
    Region { state: String, t: f64, source: BlockError },
    #[error("netlist evaluation failed at t = {t:e}: {source}")]
    Netlist { t: f64, source: SynthError },
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl SimError {
    /// Whether the failure is numeric (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, SimError::Diverged { .. } | SimError::Region { .. } | SimError::Netlist { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(format!("unknown method `{other}` (expected `euler` or `rk4`)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        })
    }
}

/// Step size and span, in the time unit of the tier being simulated
/// (model units for the reference tier, seconds for the circuit tiers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        IntegratorConfig { method: Method::Rk4, dt, t_end, record_stride: 1 }
    }

    pub fn with_stride(self, record_stride: usize) -> Self {
        IntegratorConfig { record_stride, ..self }
    }

    pub fn with_method(self, method: Method) -> Self {
        IntegratorConfig { method, ..self }
    }

    /// The same run measured in a time unit `factor` times shorter.
    pub fn scaled(self, factor: f64) -> Self {
        IntegratorConfig { dt: self.dt * factor, t_end: self.t_end * factor, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.dt > self.t_end {
            return bad(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if self.steps() > 1_000_000_000 {
            return bad(format!("{} steps requested", self.steps()));
        }
        Ok(())
    }

    /// Number of steps; the last sample lands at `steps · dt ≈ t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Physical seconds per model time unit for a core with capacitor `cap`
/// and scaling current `i_dc`: `cap·d·√i_norm / (2√k_n·i_dc)` where `d` is
/// the configured slope denominator.
pub fn compute_tau(p: &DeviceParams, cap: f64, i_dc: f64) -> f64 {
    cap * p.slope_denominator_value() * p.i_norm.sqrt() / (2.0 * p.k_n().sqrt() * i_dc)
}
