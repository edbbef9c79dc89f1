use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::lfm::AugmentedModel;
use crate::numerics::{eigenvalues, numerical_rank, pbh_rank, RankReport};

/// Real parts above `-STABILITY_TOL · max(1, |λ|max)` count as not stable.
pub const STABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCheck {
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
    pub rank: usize,
    pub deficiency: usize,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectabilityReport {
    pub modes: Vec<ModeCheck>,
    /// Rank-deficient modes that are not asymptotically stable.
    pub undetectable: Vec<ModeCheck>,
    pub detectable: bool,
}

/// PBH test of `(F, H)` at every eigenvalue of `F`.
pub fn detectability_of(f: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DetectabilityReport> {
    let eig = eigenvalues(f);
    let scale = eig.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut modes = Vec::with_capacity(eig.len());
    for s in eig {
        let r = pbh_rank(f, h, s)?;
        modes.push(ModeCheck {
            eigenvalue_re: s.re,
            eigenvalue_im: s.im,
            rank: r.rank,
            deficiency: r.deficiency,
            stable: s.re < -STABILITY_TOL * scale,
        });
    }
    let undetectable: Vec<ModeCheck> = modes
        .iter()
        .filter(|m| m.deficiency > 0 && !m.stable)
        .cloned()
        .collect();
    Ok(DetectabilityReport {
        detectable: undetectable.is_empty(),
        modes,
        undetectable,
    })
}

/// Detectability of the continuous augmented pair `(F_ac, H_ac)`.
pub fn detectability_check(model: &AugmentedModel) -> Result<DetectabilityReport> {
    detectability_of(&model.f_ac, &model.h_ac)
}

/// Rank of `U(s) = [[A_c − sI, B*], [0, F* − sI], [G_c, J*]]`; full rank is
/// `n_s + M`.
pub fn transmission_zero_rank(model: &AugmentedModel, s: Complex64) -> RankReport {
    let n_a = model.n_augmented();
    let n_o = model.h_ac.nrows();
    let mut u = DMatrix::<Complex64>::zeros(n_a + n_o, n_a);
    for i in 0..n_a {
        for j in 0..n_a {
            u[(i, j)] = Complex64::new(model.f_ac[(i, j)], 0.0);
        }
        u[(i, i)] -= s;
    }
    for i in 0..n_o {
        for j in 0..n_a {
            u[(n_a + i, j)] = Complex64::new(model.h_ac[(i, j)], 0.0);
        }
    }
    numerical_rank(&u)
}
