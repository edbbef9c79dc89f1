//! Dense linear-algebra primitives: matrix exponential, Lyapunov solves,
//! zero-order-hold discretization, process-noise integrals and rank tests.
//!
//! Every function is pure; inputs are borrowed and results freshly allocated.

mod expm;
mod lyapunov;
mod rank;
mod zoh;

pub use expm::{matrix_exponential, norm1};
pub use lyapunov::{eigenvalues, solve_lyapunov, spectral_abscissa};
pub use rank::{complexify, numerical_rank, pbh_rank, RankReport, RANK_RELATIVE_EPS};
pub use zoh::{augmented_input_matrix, discrete_process_noise, discretize_zoh};

use nalgebra::DMatrix;

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `(P + Pᵀ) / 2`.
pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}
