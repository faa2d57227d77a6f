//! Current-mode translinear blocks.
//!
//! Every block computes on single-sided (nonnegative) currents. Signed
//! quantities travel as a pair of rails, `X = X⁺ − X⁻`.

use super::BlockError;

fn check_input(block: &'static str, value: f64) -> Result<(), BlockError> {
    if value.is_nan() || value < 0.0 {
        Err(BlockError::NegativeInput { block, value })
    } else {
        Ok(())
    }
}

fn check_bias(block: &'static str, bias: f64) -> Result<(), BlockError> {
    if bias.is_nan() || bias <= 0.0 {
        Err(BlockError::NonPositiveBias { block, value: bias })
    } else {
        Ok(())
    }
}

/// Root-square block: `2√(i_in · i_bias)`.
pub fn root_square(i_in: f64, i_bias: f64) -> Result<f64, BlockError> {
    check_input("root_square", i_in)?;
    check_bias("root_square", i_bias)?;
    Ok(2.0 * (i_in * i_bias).sqrt())
}

/// MULT core: `(i_in + i_bias/2)² / i_bias`.
pub fn mult_core(i_in: f64, i_bias: f64) -> Result<f64, BlockError> {
    check_input("mult_core", i_in)?;
    check_bias("mult_core", i_bias)?;
    let s = i_in + 0.5 * i_bias;
    Ok(s * s / i_bias)
}

/// Splitter: separate a signed current into `(x⁺, x⁻)`, at most one nonzero.
pub fn split(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (x, 0.0)
    } else if x < 0.0 {
        (0.0, -x)
    } else {
        (0.0, 0.0)
    }
}

/// Bilateral multiplier on rail pairs.
///
/// Returns `(2(X⁺Y⁺ + X⁻Y⁻)/I_b, 2(X⁻Y⁺ + X⁺Y⁻)/I_b)`, whose difference is
/// `2XY/I_b`.
pub fn bilateral_mult(
    x_plus: f64,
    x_minus: f64,
    y_plus: f64,
    y_minus: f64,
    i_bias: f64,
) -> Result<(f64, f64), BlockError> {
    for v in [x_plus, x_minus, y_plus, y_minus] {
        check_input("bilateral_mult", v)?;
    }
    check_bias("bilateral_mult", i_bias)?;
    let g = 2.0 / i_bias;
    Ok((g * (x_plus * y_plus + x_minus * y_minus), g * (x_minus * y_plus + x_plus * y_minus)))
}

/// Bilateral multiplier assembled from four MULT cores.
///
/// Each core is fed a sum of one X rail and one Y rail; the same-sign pairs
/// form the positive output and the cross pairs the negative one. The
/// linear and `I_b/4` parts of the core outputs are equal on both sides, so
/// only the difference of the returned rails is meaningful.
pub fn bilateral_mult_from_cores(
    x_plus: f64,
    x_minus: f64,
    y_plus: f64,
    y_minus: f64,
    i_bias: f64,
) -> Result<(f64, f64), BlockError> {
    let plus = mult_core(x_plus + y_plus, i_bias)? + mult_core(x_minus + y_minus, i_bias)?;
    let minus = mult_core(x_minus + y_plus, i_bias)? + mult_core(x_plus + y_minus, i_bias)?;
    Ok((plus, minus))
}

#[cfg(test)]
mod tests {
    use super::*;

    const UA: f64 = 1e-6;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-12)
    }

    #[test]
    fn root_square_examples() {
        assert_eq!(root_square(0.0, UA).unwrap(), 0.0);
        assert!(close(root_square(UA, UA).unwrap(), 2.0 * UA));
        assert!(close(root_square(4.0 * UA, UA).unwrap(), 4.0 * UA));
        assert!(matches!(root_square(-UA, UA), Err(BlockError::NegativeInput { .. })));
        assert!(matches!(root_square(UA, 0.0), Err(BlockError::NonPositiveBias { .. })));
    }

    #[test]
    fn root_square_output_squared() {
        for k in 0..=1000 {
            let i_in = 10.0 * UA * k as f64 / 1000.0;
            let out = root_square(i_in, 1.7 * UA).unwrap();
            let want = 4.0 * i_in * 1.7 * UA;
            assert!((out * out - want).abs() <= 4.0 * f64::EPSILON * want.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn mult_core_examples() {
        assert!(close(mult_core(0.0, 3.0 * UA).unwrap(), 0.75 * UA));
        assert!(close(mult_core(1.5 * UA, 3.0 * UA).unwrap(), 3.0 * UA));
        assert!(close(mult_core(UA, 4.0 * UA).unwrap(), 2.25 * UA));
        assert!(mult_core(-UA, UA).is_err());
    }

    #[test]
    fn split_examples() {
        assert_eq!(split(5.0 * UA), (5.0 * UA, 0.0));
        assert_eq!(split(-3.0 * UA), (0.0, 3.0 * UA));
        assert_eq!(split(0.0), (0.0, 0.0));
    }

    #[test]
    fn bilateral_examples() {
        assert_eq!(bilateral_mult(0.0, 0.0, 0.0, 0.0, 3.0 * UA).unwrap(), (0.0, 0.0));
        let (p, m) = bilateral_mult(UA, 0.0, UA, 0.0, 3.0 * UA).unwrap();
        assert!(close(p - m, 2.0 / 3.0 * UA));
        let (p, m) = bilateral_mult(0.0, UA, 2.0 * UA, 0.0, 3.0 * UA).unwrap();
        assert!(close(p - m, -4.0 / 3.0 * UA));
        assert!(bilateral_mult(UA, -UA, 0.0, 0.0, UA).is_err());
    }

    #[test]
    fn cores_agree_with_closed_form_on_examples() {
        let (p, m) = bilateral_mult_from_cores(0.0, UA, 2.0 * UA, 0.0, 3.0 * UA).unwrap();
        assert!(((p - m) - (-4.0 / 3.0 * UA)).abs() < 1e-12 * 10.0 * UA);
    }
}
