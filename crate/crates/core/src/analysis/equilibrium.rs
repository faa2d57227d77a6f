use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::dsl::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tolerance: 1e-12, max_iterations: 100 }
    }
}

/// Equilibrium of `spec` with every external at its value at `t = 0`.
pub fn find_equilibrium(spec: &SystemSpec, guess: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let ext: Vec<f64> = spec.externals.iter().map(|e| e.waveform.value_at(0.0)).collect();
    find_equilibrium_with(spec, guess, &ext, NewtonOptions::default())
}

/// Damped Newton iteration on `F(x) = 0` with a central-difference
/// Jacobian; externals held at `ext`.
pub fn find_equilibrium_with(
    spec: &SystemSpec,
    guess: &[f64],
    ext: &[f64],
    opts: NewtonOptions,
) -> Result<Vec<f64>, AnalysisError> {
    let n = spec.states.len();
    if guess.len() != n {
        return Err(AnalysisError::GuessLength { got: guess.len(), expected: n });
    }
    let f = spec.bound_derivatives();
    let mut vals: Vec<f64> = guess.iter().chain(ext).copied().collect();
    let mut residual = |x: &[f64]| -> DVector<f64> {
        vals[..n].copy_from_slice(x);
        DVector::from_iterator(n, f.iter().map(|e| e.eval(&vals)))
    };

    let mut x = guess.to_vec();
    let mut fx = residual(&x);
    for it in 0..opts.max_iterations {
        if fx.amax() < opts.tolerance {
            return Ok(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (residual(&xp) - residual(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&(-&fx)).ok_or(AnalysisError::SingularJacobian(it))?;

        // Halve the step until the residual stops growing.
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            let ft = residual(&trial);
            if ft.amax() < fx.amax() || lambda < 1e-6 {
                x = trial;
                fx = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    if fx.amax() < opts.tolerance {
        return Ok(x);
    }
    Err(AnalysisError::NoConvergence { iterations: opts.max_iterations, residual: fx.amax() })
}
