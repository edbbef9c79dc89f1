use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative singular-value cutoff factor; the absolute threshold is
/// `σ_max · max(rows, cols) · 2⁻⁴⁰`.
pub const RANK_RELATIVE_EPS: f64 = 9.094_947_017_729_282e-13; // 2^-40

/// Outcome of a numerical rank evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    /// Rank a nonsingular instance would have (the column count for the
    /// tall matrices used here).
    pub full_rank: usize,
    pub deficiency: usize,
    pub tolerance: f64,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    pub fn is_full(&self) -> bool {
        self.deficiency == 0
    }
}

/// Numerical rank of a complex matrix from its singular values.
pub fn numerical_rank(m: &DMatrix<Complex64>) -> RankReport {
    let (rows, cols) = m.shape();
    let full_rank = rows.min(cols);
    if full_rank == 0 {
        return RankReport {
            rank: 0,
            full_rank,
            deficiency: 0,
            tolerance: 0.0,
            singular_values: Vec::new(),
        };
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv[0];
    let tolerance = sigma_max * rows.max(cols) as f64 * RANK_RELATIVE_EPS;
    let rank = if sigma_max == 0.0 {
        0
    } else {
        sv.iter().filter(|s| **s > tolerance).count()
    };
    RankReport {
        rank,
        full_rank,
        deficiency: full_rank - rank,
        tolerance,
        singular_values: sv,
    }
}

/// Promotes a real matrix to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Rank of the PBH matrix `[sI − F; H]`.
pub fn pbh_rank(f: &DMatrix<f64>, h: &DMatrix<f64>, s: Complex64) -> Result<RankReport> {
    let n = f.nrows();
    if !f.is_square() || h.ncols() != n {
        return Err(Error::dim(format!(
            "PBH test needs square F and H with {n} columns, got F {:?}, H {:?}",
            f.shape(),
            h.shape()
        )));
    }
    let m = h.nrows();
    let mut pbh = DMatrix::<Complex64>::zeros(n + m, n);
    for i in 0..n {
        for j in 0..n {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            pbh[(i, j)] = diag - f[(i, j)];
        }
    }
    pbh.view_mut((n, 0), (m, n)).copy_from(&complexify(h));
    Ok(numerical_rank(&pbh))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn observed_integrator_is_full_rank() {
        let r = pbh_rank(&DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0), c(0.0)).unwrap();
        assert_eq!((r.rank, r.deficiency), (1, 0));
    }

    #[test]
    fn unobserved_integrator_is_deficient() {
        let r = pbh_rank(&DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1), c(0.0)).unwrap();
        assert_eq!((r.rank, r.deficiency), (0, 1));
    }

    #[test]
    fn tolerance_constant_is_two_to_minus_forty() {
        assert_eq!(RANK_RELATIVE_EPS, 2f64.powi(-40));
    }

    #[test]
    fn complex_shift_of_oscillator() {
        // undamped oscillator observed through velocity only: still observable
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0]);
        let h = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let r = pbh_rank(&f, &h, Complex64::new(0.0, 2.0)).unwrap();
        assert!(r.is_full());
        // but not through a zero row
        let r = pbh_rank(&f, &DMatrix::zeros(1, 2), Complex64::new(0.0, 2.0)).unwrap();
        assert_eq!(r.deficiency, 1);
    }
}
