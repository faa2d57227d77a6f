//! Translinear building blocks and the square-law core model.

mod device;
mod translinear;

use thiserror::Error;

pub use device::{
    core_device_step, nmos_current, pmos_current, sqrt_pair, CoreDevice, CoreState, DeviceParams,
    SlopeDenominator,
};
pub use translinear::{bilateral_mult, bilateral_mult_from_cores, mult_core, root_square, split};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("{block}: input current {value:e} A is negative (blocks are single-sided)")]
    NegativeInput { block: &'static str, value: f64 },
    #[error("{block}: bias current {value:e} A must be positive")]
    NonPositiveBias { block: &'static str, value: f64 },
    #[error("{device} left strong-inversion saturation (overdrive {overdrive:e})")]
    RegionFault { device: CoreDevice, overdrive: f64 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}
