//! Half-integer Matérn covariance functions and their exact linear
//! time-invariant state-space realizations.
//!
//! For `ν = p + 1/2` the spectral density is proportional to
//! `(λ² + ω²)^-(p+1)` with `λ = √(2ν)/l`, which factors as
//! `|(λ + iω)^-(p+1)|²`. The stable factor is realized in companion form
//! with characteristic polynomial `(s + λ)^(p+1)` driven by white noise of
//! spectral density `σ_w`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matrix_exponential, solve_lyapunov};

/// Covariance family. Only the Matérn family is realized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Matern,
}

/// Stationary kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Smoothness index; `ν = p + 1/2`.
    pub p: u32,
    /// Signal variance α² (N² for forces).
    pub alpha2: f64,
    /// Lengthscale in seconds.
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn matern(p: u32, alpha2: f64, lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            p,
            alpha2,
            lengthscale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 2 {
            return Err(Error::UnsupportedKernel(format!(
                "Matérn p = {} (only p ∈ {{0, 1, 2}} is realized)",
                self.p
            )));
        }
        if !(self.alpha2 > 0.0 && self.alpha2.is_finite()) {
            return Err(Error::invalid(format!("alpha2 must be positive, got {}", self.alpha2)));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        Ok(())
    }

    /// State dimension of the realization.
    pub fn order(&self) -> usize {
        self.p as usize + 1
    }

    /// `λ = √(2ν)/l`.
    pub fn lambda(&self) -> f64 {
        ((2 * self.p + 1) as f64).sqrt() / self.lengthscale
    }
}

/// Closed-form half-integer Matérn covariance at lag `tau`.
pub fn matern_eval(spec: &KernelSpec, tau: f64) -> f64 {
    let r = tau.abs() / spec.lengthscale;
    let a2 = spec.alpha2;
    match spec.p {
        0 => a2 * (-r).exp(),
        1 => {
            let s = 3f64.sqrt() * r;
            a2 * (1.0 + s) * (-s).exp()
        }
        2 => {
            let s = 5f64.sqrt() * r;
            a2 * (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
        }
        p => panic!("Matérn p = {p} has no closed form here; validate the spec first"),
    }
}

/// LTI realization `ż = F z + L w`, `f = H z`, `E[w(t)w(s)] = σ_w δ(t−s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRealization {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub sigma_w: f64,
    /// Stationary covariance, used as the initial covariance of the block.
    pub p_inf: DMatrix<f64>,
    pub lambda: f64,
}

impl KernelRealization {
    pub fn order(&self) -> usize {
        self.f.nrows()
    }

    /// Spectral density of the driving noise, `L σ_w Lᵀ`.
    pub fn q_c(&self) -> DMatrix<f64> {
        &self.l * self.sigma_w * self.l.transpose()
    }

    /// Scalar random-walk block (`F = 0`, `H = 1`) that turns the augmented
    /// model into the classical input-augmented form. There is no stationary
    /// covariance; `initial_var` is used as the initial covariance instead.
    pub fn random_walk(sigma_w: f64, initial_var: f64) -> Self {
        KernelRealization {
            f: DMatrix::zeros(1, 1),
            l: DMatrix::from_element(1, 1, 1.0),
            h: DMatrix::from_element(1, 1, 1.0),
            sigma_w,
            p_inf: DMatrix::from_element(1, 1, initial_var),
            lambda: 0.0,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// White-noise spectral density for Matérn `p`:
/// `2 α² √π λ^(2p+1) Γ(p+1) / Γ(p+1/2)`, with the Gamma ratio written out
/// for half-integers as `(p!)² 4^p / ((2p)! √π)`.
pub fn matern_noise_density(spec: &KernelSpec) -> f64 {
    let p = spec.p as usize;
    let lambda = spec.lambda();
    let gamma_ratio = factorial(p).powi(2) * 4f64.powi(p as i32) / factorial(2 * p);
    2.0 * spec.alpha2 * lambda.powi(2 * p as i32 + 1) * gamma_ratio
}

/// Companion-form realization of a Matérn kernel.
pub fn kernel_to_ssm(spec: &KernelSpec) -> Result<KernelRealization> {
    spec.validate()?;
    let m = spec.order();
    let lambda = spec.lambda();

    let mut f = DMatrix::zeros(m, m);
    for i in 0..m - 1 {
        f[(i, i + 1)] = 1.0;
    }
    // (s + λ)^m = Σ C(m, i) λ^(m−i) s^i
    for i in 0..m {
        f[(m - 1, i)] = -binomial(m, i) * lambda.powi((m - i) as i32);
    }
    let mut l = DMatrix::zeros(m, 1);
    l[(m - 1, 0)] = 1.0;
    let mut h = DMatrix::zeros(1, m);
    h[(0, 0)] = 1.0;

    let sigma_w = matern_noise_density(spec);
    let q = &l * sigma_w * l.transpose();
    let p_inf = solve_lyapunov(&f, &q)?;
    Ok(KernelRealization {
        f,
        l,
        h,
        sigma_w,
        p_inf,
        lambda,
    })
}

/// Covariance recovered from the realization:
/// `H P∞ Φ(τ)ᵀ Hᵀ` for `τ ≥ 0`, `H Φ(−τ) P∞ Hᵀ` otherwise.
pub fn kernel_from_ssm(real: &KernelRealization, tau: f64) -> Result<f64> {
    let v = if tau >= 0.0 {
        let phi = matrix_exponential(&real.f, tau)?;
        &real.h * &real.p_inf * phi.transpose() * real.h.transpose()
    } else {
        let phi = matrix_exponential(&real.f, -tau)?;
        &real.h * phi * &real.p_inf * real.h.transpose()
    };
    Ok(v[(0, 0)])
}

/// Batch GP posterior at the query times.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Zero-mean GP regression with i.i.d. Gaussian noise, evaluated directly
/// from the Gram matrix: `μ* = k*ᵀ (K + σ²I)⁻¹ y`,
/// `σ*² = k** − k*ᵀ (K + σ²I)⁻¹ k*`.
pub fn gp_regress(
    times: &[f64],
    y: &[f64],
    spec: &KernelSpec,
    noise_var: f64,
    t_star: &[f64],
) -> Result<GpPosterior> {
    spec.validate()?;
    if times.len() != y.len() {
        return Err(Error::dim("times and observations differ in length"));
    }
    if !(noise_var > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("observation times must be strictly increasing"));
    }
    let n = times.len();
    if n == 0 {
        return Ok(GpPosterior {
            mean: vec![0.0; t_star.len()],
            variance: vec![spec.alpha2; t_star.len()],
        });
    }
    let gram = DMatrix::from_fn(n, n, |i, j| {
        matern_eval(spec, times[i] - times[j]) + if i == j { noise_var } else { 0.0 }
    });
    let chol = gram.cholesky().ok_or(Error::Conditioning {
        step: 0,
        context: "GP Gram matrix is not positive definite".into(),
    })?;
    let alpha = chol.solve(&DVector::from_column_slice(y));

    let mut mean = Vec::with_capacity(t_star.len());
    let mut variance = Vec::with_capacity(t_star.len());
    for &ts in t_star {
        let k_star = DVector::from_iterator(n, times.iter().map(|&t| matern_eval(spec, ts - t)));
        mean.push(k_star.dot(&alpha));
        let v = chol.solve(&k_star);
        variance.push(spec.alpha2 - k_star.dot(&v));
    }
    Ok(GpPosterior { mean, variance })
}

/// Single-point form of [`gp_regress`].
pub fn gp_regress_batch(
    times: &[f64],
    y: &[f64],
    spec: &KernelSpec,
    noise_var: f64,
    t_star: f64,
) -> Result<(f64, f64)> {
    let post = gp_regress(times, y, spec, noise_var, &[t_star])?;
    Ok((post.mean[0], post.variance[0]))
}
