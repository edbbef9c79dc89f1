use nalgebra::DMatrix;

use super::expm::{matrix_exponential, norm1};
use super::zoh::discrete_process_noise;
use crate::error::{Error, Result};

/// Largest order solved through the Kronecker-product linear system; larger
/// problems go through Smith doubling on the sampled system.
const KRONECKER_MAX_ORDER: usize = 24;

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `F P + P Fᵀ + Q = 0` for the stationary covariance `P`.
///
/// `F` must be Hurwitz; otherwise no steady state exists and a stability
/// error is returned.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !f.is_square() || q.shape() != (n, n) {
        return Err(Error::dim(format!(
            "Lyapunov solve needs square F and matching Q, got F {:?}, Q {:?}",
            f.shape(),
            q.shape()
        )));
    }
    let abscissa = spectral_abscissa(f);
    if abscissa >= 0.0 {
        return Err(Error::Stability(format!(
            "F is not Hurwitz (max Re(eig) = {abscissa:e}); no steady-state covariance"
        )));
    }

    let p = if n <= KRONECKER_MAX_ORDER {
        kronecker_solve(f, q)?
    } else {
        smith_doubling(f, q)?
    };
    Ok((&p + p.transpose()) * 0.5)
}

fn kronecker_solve(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(F P) = (I ⊗ F) vec(P), vec(P Fᵀ) = (F ⊗ I) vec(P)
    let system = eye.kronecker(f) + f.kronecker(&eye);
    let rhs = nalgebra::DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = system.lu().solve(&rhs).ok_or_else(|| {
        Error::Stability("Lyapunov operator is singular".to_string())
    })?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

fn smith_doubling(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let h = 1.0 / norm1(f).max(f64::MIN_POSITIVE);
    let mut a = matrix_exponential(f, h)?;
    let mut p = discrete_process_noise(f, q, h)?;
    for _ in 0..200 {
        let increment = &a * &p * a.transpose();
        p += &increment;
        a = &a * &a;
        if norm1(&increment) <= f64::EPSILON * norm1(&p) && norm1(&a) < 1e-8 {
            return Ok(p);
        }
    }
    Err(Error::Stability(
        "Smith doubling for the Lyapunov equation did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(f: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
        (f * p + p * f.transpose() + q).norm()
    }

    #[test]
    fn scalar_closed_form() {
        let lambda = 0.7;
        let sigma_w = 3.0;
        let p = solve_lyapunov(
            &DMatrix::from_element(1, 1, -lambda),
            &DMatrix::from_element(1, 1, sigma_w),
        )
        .unwrap();
        assert!((p[(0, 0)] - sigma_w / (2.0 * lambda)).abs() < 1e-14);
    }

    #[test]
    fn unstable_rejected() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let q = DMatrix::identity(2, 2);
        assert!(matches!(solve_lyapunov(&f, &q), Err(Error::Stability(_))));
    }

    #[test]
    fn doubling_path_matches_kronecker() {
        // block-diagonal stable system large enough to take the doubling route
        let n = 30;
        let mut f = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            f[(i, i)] = -0.5 - 0.1 * i as f64;
            if i + 1 < n {
                f[(i, i + 1)] = 0.3;
            }
        }
        let mut q = DMatrix::<f64>::identity(n, n);
        q[(0, 0)] = 4.0;
        let p = solve_lyapunov(&f, &q).unwrap();
        assert!(residual(&f, &p, &q) <= 1e-10 * q.norm());
        let small = f.view((0, 0), (10, 10)).into_owned();
        let qs = q.view((0, 0), (10, 10)).into_owned();
        let ps = solve_lyapunov(&small, &qs).unwrap();
        assert!(residual(&small, &ps, &qs) <= 1e-12 * qs.norm());
    }
}
