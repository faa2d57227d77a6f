//! Plain `key = value` electrical configuration files.
//!
//! ```text
//! # device
//! mu_n_cox = 170e-6
//! wl_n = 10
//! slope_denominator = paper
//! # scaling
//! i_unit = 1e-6
//! cap = 800e-12          # or cap.<state>
//! i_dc.v = 80e-9
//! i_core.v = 2e-6
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::blocks::DeviceParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElectricalConfig {
    pub device: DeviceParams,
    /// Current representing one model unit, A.
    pub i_unit: Option<f64>,
    /// Capacitance used for states without a `cap.<state>` entry, F.
    pub cap: Option<f64>,
    pub cap_state: BTreeMap<String, f64>,
    pub i_dc: BTreeMap<String, f64>,
    pub i_core: BTreeMap<String, f64>,
}

impl ElectricalConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ElectricalConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Parse { line, message: format!("expected `key = value`, got `{body}`") })?;
            let err = |message: String| ConfigError::Parse { line, message };

            if key == "slope_denominator" {
                cfg.device.slope_denominator = value.parse().map_err(err)?;
                continue;
            }
            let num: f64 = value
                .parse()
                .map_err(|_| err(format!("`{key}`: `{value}` is not a number")))?;
            if !num.is_finite() {
                return Err(err(format!("`{key}` must be finite")));
            }
            let d = &mut cfg.device;
            match key {
                "mu_n_cox" => d.mu_n_cox = num,
                "mu_p_cox" => d.mu_p_cox = num,
                "wl_n" => d.wl_n = num,
                "wl_p" => d.wl_p = num,
                "v_th" => d.v_th = num,
                "v_b" => d.v_b = num,
                "i_norm" => d.i_norm = num,
                "i_unit" => cfg.i_unit = Some(positive(key, num).map_err(err)?),
                "cap" => cfg.cap = Some(positive(key, num).map_err(err)?),
                _ => {
                    let (table, state) = key
                        .split_once('.')
                        .filter(|(_, s)| !s.is_empty())
                        .ok_or_else(|| err(format!("unknown key `{key}`")))?;
                    let map = match table {
                        "cap" => &mut cfg.cap_state,
                        "i_dc" => &mut cfg.i_dc,
                        "i_core" => &mut cfg.i_core,
                        _ => return Err(err(format!("unknown key `{key}`"))),
                    };
                    map.insert(state.to_string(), positive(key, num).map_err(err)?);
                }
            }
        }
        cfg.device.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}

fn positive(key: &str, v: f64) -> Result<f64, String> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{key}` must be positive"))
    }
}
