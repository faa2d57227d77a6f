//! Square-law MOSFET model and the four-transistor integrating core.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BlockError;

/// Denominator of the core's slope relation `dI_out/dt ∝ 1/(d·C)`.
///
/// `Derived` is what the KVL chain of the core gives (`1 + β`); `Paper` is
/// the `2 + β` form used by default. The two differ only by a time scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeDenominator {
    #[default]
    Paper,
    Derived,
}

impl SlopeDenominator {
    pub fn value(self, beta: f64) -> f64 {
        match self {
            SlopeDenominator::Paper => 2.0 + beta,
            SlopeDenominator::Derived => 1.0 + beta,
        }
    }
}

impl FromStr for SlopeDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(SlopeDenominator::Paper),
            "derived" => Ok(SlopeDenominator::Derived),
            other => Err(format!("unknown slope denominator `{other}` (expected `paper` or `derived`)")),
        }
    }
}

impl fmt::Display for SlopeDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlopeDenominator::Paper => "paper",
            SlopeDenominator::Derived => "derived",
        })
    }
}

/// Process and bias constants, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// µn·Cox, A/V².
    pub mu_n_cox: f64,
    /// µp·Cox, A/V².
    pub mu_p_cox: f64,
    pub wl_n: f64,
    pub wl_p: f64,
    /// Threshold magnitude shared by NMOS and PMOS, V.
    pub v_th: f64,
    /// Core bias voltage, V.
    pub v_b: f64,
    /// Normalization current of the root-square blocks that form the
    /// divisor `√(I_A·i_norm) + √(I_B·i_norm)`, A.
    pub i_norm: f64,
    pub slope_denominator: SlopeDenominator,
}

impl Default for DeviceParams {
    /// Typical 0.35 µm constants with W/L = 10/1 (NMOS) and 12/1 (PMOS):
    /// k_n = 850 µA/V², k_p = 348 µA/V², β ≈ 1.563.
    fn default() -> Self {
        DeviceParams {
            mu_n_cox: 170e-6,
            mu_p_cox: 58e-6,
            wl_n: 10.0,
            wl_p: 12.0,
            v_th: 0.5,
            v_b: 3.3,
            i_norm: 1e-6,
            slope_denominator: SlopeDenominator::Paper,
        }
    }
}

impl DeviceParams {
    pub fn k_n(&self) -> f64 {
        0.5 * self.mu_n_cox * self.wl_n
    }

    pub fn k_p(&self) -> f64 {
        0.5 * self.mu_p_cox * self.wl_p
    }

    pub fn beta(&self) -> f64 {
        (self.k_n() / self.k_p()).sqrt()
    }

    pub fn slope_denominator_value(&self) -> f64 {
        self.slope_denominator.value(self.beta())
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let bad = |what: &str| Err(BlockError::InvalidParams(what.to_string()));
        let all = [self.mu_n_cox, self.mu_p_cox, self.wl_n, self.wl_p, self.v_th, self.v_b, self.i_norm];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("all device parameters must be finite");
        }
        if self.k_n() <= 0.0 || self.k_p() <= 0.0 {
            return bad("k_n and k_p must be positive");
        }
        if self.v_th <= 0.0 {
            return bad("v_th must be positive");
        }
        if self.v_b <= self.v_th {
            return bad("v_b must exceed v_th");
        }
        if self.i_norm <= 0.0 {
            return bad("i_norm must be positive");
        }
        Ok(())
    }
}

/// Saturation drain current of an NMOS device; zero below threshold.
pub fn nmos_current(v_gs: f64, p: &DeviceParams) -> f64 {
    let ov = (v_gs - p.v_th).max(0.0);
    p.k_n() * ov * ov
}

/// Saturation drain current of a PMOS device; zero below threshold.
pub fn pmos_current(v_sg: f64, p: &DeviceParams) -> f64 {
    let ov = (v_sg - p.v_th).max(0.0);
    p.k_p() * ov * ov
}

/// Which core device left strong inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreDevice {
    /// Carries I_A.
    M1,
    /// Carries I_B.
    M3,
}

impl fmt::Display for CoreDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoreDevice::M1 => "M1",
            CoreDevice::M3 => "M3",
        })
    }
}

/// Electrical state of one integrating core.
///
/// `i_a = k_n(v_gs1 − v_th)²` and `i_b = k_n(v_gs3 − v_th)²` always hold;
/// the state variable is `I_out = i_b − i_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreState {
    pub v_c: f64,
    pub v_gs1: f64,
    pub v_gs3: f64,
    pub i_a: f64,
    pub i_b: f64,
}

impl CoreState {
    fn from_gates(v_c: f64, v_gs1: f64, v_gs3: f64, p: &DeviceParams) -> Result<Self, BlockError> {
        for (dev, v_gs) in [(CoreDevice::M1, v_gs1), (CoreDevice::M3, v_gs3)] {
            let overdrive = v_gs - p.v_th;
            if overdrive.is_nan() || overdrive < 0.0 {
                return Err(BlockError::RegionFault { device: dev, overdrive });
            }
        }
        Ok(CoreState { v_c, v_gs1, v_gs3, i_a: nmos_current(v_gs1, p), i_b: nmos_current(v_gs3, p) })
    }

    /// Core biased so that `√i_a + √i_b = 2√i_core` while carrying `i_out`.
    ///
    /// `V_C` is referenced to `v_b/2` at the symmetric point `i_a = i_b`.
    pub fn biased(p: &DeviceParams, i_core: f64, i_out: f64) -> Result<Self, BlockError> {
        let (sa, sb) = sqrt_pair(i_core, i_out)?;
        let rk = p.k_n().sqrt();
        let v_gs1 = p.v_th + sa / rk;
        let v_gs3 = p.v_th + sb / rk;
        let v_c = 0.5 * p.v_b + 0.5 * (1.0 + p.beta()) * (v_gs3 - v_gs1);
        Self::from_gates(v_c, v_gs1, v_gs3, p)
    }

    /// Symmetric quiescent point `i_a = i_b = i_core`.
    pub fn quiescent(p: &DeviceParams, i_core: f64) -> Result<Self, BlockError> {
        Self::biased(p, i_core, 0.0)
    }

    pub fn i_out(&self) -> f64 {
        self.i_b - self.i_a
    }

    /// `√i_a + √i_b`, conserved by the core's KVL constraints.
    pub fn sqrt_sum(&self) -> f64 {
        self.i_a.sqrt() + self.i_b.sqrt()
    }

    /// State after the capacitor voltage moves by `dv_c`.
    ///
    /// KVL around the two loops gives `dV_GS1 = −dV_C/(1+β)` and
    /// `dV_GS3 = +dV_C/(1+β)`.
    pub fn shifted(&self, dv_c: f64, p: &DeviceParams) -> Result<Self, BlockError> {
        let d = dv_c / (1.0 + p.beta());
        Self::from_gates(self.v_c + dv_c, self.v_gs1 - d, self.v_gs3 + d, p)
    }
}

/// `(√I_A, √I_B)` for a core whose root sum is `2√i_core` and whose
/// output is `i_out`.
pub fn sqrt_pair(i_core: f64, i_out: f64) -> Result<(f64, f64), BlockError> {
    let s = 2.0 * i_core.sqrt();
    let d = i_out / s;
    let sa = 0.5 * (s - d);
    let sb = 0.5 * (s + d);
    if sa.is_nan() || sa < 0.0 {
        return Err(BlockError::RegionFault { device: CoreDevice::M1, overdrive: sa });
    }
    if sb.is_nan() || sb < 0.0 {
        return Err(BlockError::RegionFault { device: CoreDevice::M3, overdrive: sb });
    }
    Ok((sa, sb))
}

/// Advance the core by one step of capacitor current `i_cin` over `dt`.
pub fn core_device_step(
    s: &CoreState,
    i_cin: f64,
    dt: f64,
    cap: f64,
    p: &DeviceParams,
) -> Result<CoreState, BlockError> {
    if i_cin == 0.0 {
        return Ok(*s);
    }
    s.shifted(i_cin / cap * dt, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kn850() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn default_constants() {
        let p = kn850();
        assert!((p.k_n() - 850e-6).abs() < 1e-18);
        assert!((p.k_p() - 348e-6).abs() < 1e-18);
        assert!((p.beta() - (850.0f64 / 348.0).sqrt()).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn nmos_square_law() {
        let p = kn850();
        assert_eq!(nmos_current(p.v_th, &p), 0.0);
        assert_eq!(nmos_current(p.v_th - 0.3, &p), 0.0);
        assert!((nmos_current(p.v_th + 1.0, &p) - 850e-6).abs() < 1e-18);
        assert!((nmos_current(p.v_th + 0.5, &p) - 212.5e-6).abs() < 1e-18);
    }

    #[test]
    fn pmos_square_law() {
        let p = kn850();
        assert_eq!(pmos_current(p.v_th, &p), 0.0);
        let unit = pmos_current(p.v_th + 1.0, &p);
        assert!((unit - p.k_n() / p.beta().powi(2)).abs() < 1e-18);
        let p290 = DeviceParams { wl_p: 10.0, ..kn850() };
        assert!((p290.k_p() - 290e-6).abs() < 1e-18);
        assert!((pmos_current(p.v_th + 0.2, &p290) - 11.6e-6).abs() < 1e-18);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = DeviceParams { v_b: 0.4, ..kn850() };
        assert!(p.validate().is_err());
        let p = DeviceParams { mu_p_cox: 0.0, ..kn850() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn quiescent_core_is_balanced() {
        let p = kn850();
        let s = CoreState::quiescent(&p, 80e-9).unwrap();
        assert!((s.i_a - 80e-9).abs() < 1e-21);
        assert!((s.i_b - 80e-9).abs() < 1e-21);
        assert_eq!(s.v_c, 0.5 * p.v_b);
        assert!((s.sqrt_sum() - 2.0 * 80e-9f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn biased_core_carries_requested_output() {
        let p = kn850();
        let s = CoreState::biased(&p, 2e-6, -1.2e-6).unwrap();
        assert!((s.i_out() + 1.2e-6).abs() < 1e-18);
        assert!((s.sqrt_sum() - 2.0 * 2e-6f64.sqrt()).abs() < 1e-15);
        assert!(CoreState::biased(&p, 2e-6, 9e-6).is_err());
    }

    #[test]
    fn zero_capacitor_current_leaves_state() {
        let p = kn850();
        let s = CoreState::biased(&p, 1e-6, 0.3e-6).unwrap();
        assert_eq!(core_device_step(&s, 0.0, 1e-3, 800e-12, &p).unwrap(), s);
    }

    #[test]
    fn output_is_odd_in_capacitor_current() {
        let p = kn850();
        let s = CoreState::quiescent(&p, 1e-6).unwrap();
        let up = core_device_step(&s, 5e-9, 1e-4, 800e-12, &p).unwrap();
        let down = core_device_step(&s, -5e-9, 1e-4, 800e-12, &p).unwrap();
        assert!(up.i_out() > 0.0);
        assert!((up.i_out() + down.i_out()).abs() < 1e-21);
    }

    #[test]
    fn slope_matches_analytic_derivative() {
        let p = kn850();
        let cap = 800e-12;
        let i_cin = 3e-9;
        let s = CoreState::biased(&p, 1e-6, 0.4e-6).unwrap();
        let slope = s.sqrt_sum() * 2.0 * p.k_n().sqrt() * (i_cin / cap) / (1.0 + p.beta());
        for dt in [1e-5, 1e-6, 1e-7] {
            let next = core_device_step(&s, i_cin, dt, cap, &p).unwrap();
            let fd = (next.i_out() - s.i_out()) / dt;
            // the dv² terms of I_A and I_B cancel: I_out is linear in V_C
            let rel = (fd - slope).abs() / slope.abs();
            assert!(rel < 1e-8, "dt={dt} rel={rel}");
        }
    }

    #[test]
    fn root_sum_conserved_over_many_steps() {
        let p = kn850();
        let cap = 800e-12;
        let mut s = CoreState::biased(&p, 2e-6, 0.0).unwrap();
        let s0 = s.sqrt_sum();
        for k in 0..1_000_000u32 {
            // bounded, sign-alternating drive keeps the core in saturation
            let i_cin = 4e-9 * ((k as f64) * 1e-4).sin();
            s = core_device_step(&s, i_cin, 1e-7, cap, &p).unwrap();
        }
        assert!(s.i_out().abs() > 1e-9, "drive should have moved the output");
        let drift = (s.sqrt_sum() - s0).abs() / s0;
        assert!(drift < 1e-9, "drift {drift}");
    }

    #[test]
    fn leaving_saturation_is_a_fault() {
        let p = kn850();
        let s = CoreState::quiescent(&p, 1e-6).unwrap();
        // a large positive V_C step drives M1 below threshold
        let err = core_device_step(&s, 1e-3, 1.0, 800e-12, &p).unwrap_err();
        assert!(matches!(err, BlockError::RegionFault { device: CoreDevice::M1, .. }), "{err:?}");
        let err = core_device_step(&s, -1e-3, 1.0, 800e-12, &p).unwrap_err();
        assert!(matches!(err, BlockError::RegionFault { device: CoreDevice::M3, .. }));
    }
}
