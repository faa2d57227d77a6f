//! Spike statistics, trace comparison, equilibria and speedup.

mod equilibrium;
mod spikes;

use thiserror::Error;

pub use equilibrium::{find_equilibrium, find_equilibrium_with, NewtonOptions};
pub use spikes::{
    compare_traces, compare_traces_at, detect_spikes, estimate_period, window_extrema, Comparison, SpikeStats,
    SpikeSummary,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trace has no signal `{0}`")]
    MissingSignal(String),
    #[error("signal `{signal}` has {count} spikes, at least {needed} are needed")]
    TooFewSpikes { signal: String, count: usize, needed: usize },
    #[error("refractory period must be positive, got {0}")]
    InvalidRefractory(f64),
    #[error("guess has {got} entries, the system has {expected} states")]
    GuessLength { got: usize, expected: usize },
    #[error("Newton iteration did not converge in {iterations} steps (|F| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

/// Ratio of a biological time unit to the circuit's: how much faster than
/// real time the circuit runs.
pub fn speedup_factor(tau_circuit: f64, tau_bio: f64) -> f64 {
    tau_bio / tau_circuit
}

/// Biological time unit assumed for FitzHugh–Nagumo time, s.
pub const FHN_TAU_BIO: f64 = 1e-3;
