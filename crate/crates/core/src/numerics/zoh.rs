use nalgebra::DMatrix;

use super::expm::matrix_exponential;
use crate::error::{Error, Result};

/// Reciprocal condition threshold below which `A_c` is treated as singular
/// and the block-augmented exponential is used for the input matrix.
const SINGULAR_RCOND: f64 = 1e-12;

/// Zero-order-hold discretization `A = exp(A_c dt)`, `B = (A − I) A_c⁻¹ B_c`.
///
/// When `A_c` is singular (or numerically so) `B` is read off the exponential
/// of `[[A_c, B_c], [0, 0]] dt` instead, which has the same meaning.
pub fn discretize_zoh(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    if !a_c.is_square() || b_c.nrows() != n {
        return Err(Error::dim(format!(
            "ZOH needs square A_c and B_c with matching rows, got {:?} and {:?}",
            a_c.shape(),
            b_c.shape()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("sampling interval must be positive"));
    }

    let a = matrix_exponential(a_c, dt)?;
    if is_well_conditioned(a_c) {
        if let Some(inv_b) = a_c.clone().lu().solve(b_c) {
            let b = (&a - DMatrix::<f64>::identity(n, n)) * inv_b;
            return Ok((a, b));
        }
    }
    let b = augmented_input_matrix(a_c, b_c, dt)?;
    Ok((a, b))
}

fn is_well_conditioned(a: &DMatrix<f64>) -> bool {
    if a.nrows() == 0 {
        return false;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min / max > SINGULAR_RCOND
}

/// Top-right block of `exp([[A_c, B_c], [0, 0]] dt)`.
pub fn augmented_input_matrix(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let n = a_c.nrows();
    let m = b_c.ncols();
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a_c);
    block.view_mut((0, n), (n, m)).copy_from(b_c);
    let e = matrix_exponential(&block, dt)?;
    Ok(e.view((0, n), (n, m)).into_owned())
}

/// Discrete process-noise covariance `∫₀^dt Ψ(dt−τ) Q_c Ψ(dt−τ)ᵀ dτ`.
///
/// Evaluated by matrix fraction decomposition: the exponential of
/// `[[F, Q_c], [0, −Fᵀ]] dt` has top blocks `[Φ, C]` and bottom-right block
/// `Φ⁻ᵀ`, so the integral equals `C Φᵀ`.
pub fn discrete_process_noise(
    f: &DMatrix<f64>,
    q_c: &DMatrix<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !f.is_square() || q_c.shape() != (n, n) {
        return Err(Error::dim(format!(
            "process noise needs square F and matching Q_c, got {:?} and {:?}",
            f.shape(),
            q_c.shape()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("sampling interval must be positive"));
    }
    if q_c.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    // Q_d is linear in Q_c, so normalize it before exponentiating
    let scale = q_c.abs().max();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(f);
    block.view_mut((0, n), (n, n)).copy_from(&(q_c / scale));
    block.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));
    let e = matrix_exponential(&block, dt)?;
    let phi = e.view((0, 0), (n, n));
    let c = e.view((0, n), (n, n));
    let q_d = c * phi.transpose() * scale;
    Ok((&q_d + q_d.transpose()) * 0.5)
}
