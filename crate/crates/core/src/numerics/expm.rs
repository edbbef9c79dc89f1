//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! The approximant degree (3, 5, 7, 9 or 13) is picked from the 1-norm of the
//! scaled argument using the backward-error bounds of Higham (2005); above the
//! degree-13 bound the argument is halved until it fits and the result squared
//! back up.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068e0;
const THETA_13: f64 = 5.371_920_351_148_152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Returns `exp(A t)`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::dim(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::invalid("matrix exponential time must be finite"));
    }
    let n = a.nrows();
    let x = a * t;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix exponential argument has non-finite entries"));
    }

    if is_diagonal(&x) {
        return Ok(DMatrix::from_diagonal(&x.diagonal().map(f64::exp)));
    }

    let norm = norm1(&x);
    let eye = DMatrix::<f64>::identity(n, n);

    for (theta, coeffs) in [
        (THETA_3, &PADE_3[..]),
        (THETA_5, &PADE_5[..]),
        (THETA_7, &PADE_7[..]),
        (THETA_9, &PADE_9[..]),
    ] {
        if norm <= theta {
            return pade_low(&x, coeffs, &eye);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = &x / 2f64.powi(squarings);
    let mut r = pade_13(&scaled, &eye)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.iter()
        .enumerate()
        .all(|(idx, v)| *v == 0.0 || idx % a.nrows() == idx / a.nrows())
}

fn pade_low(x: &DMatrix<f64>, b: &[f64], eye: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x2 = x * x;
    let mut u_inner = eye * b[1];
    let mut v = eye * b[0];
    let mut power = eye.clone();
    for k in 1..b.len() / 2 {
        power = &power * &x2;
        u_inner += &power * b[2 * k + 1];
        v += &power * b[2 * k];
    }
    let u = x * u_inner;
    solve_pade(&u, &v)
}

fn pade_13(x: &DMatrix<f64>, eye: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &PADE_13;
    let a2 = x * x;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_tail = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = x * (u_tail + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + eye * b[1]);
    let v_tail = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_tail + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + eye * b[0];
    solve_pade(&u, &v)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::Conditioning {
        step: 0,
        context: "Padé denominator singular in matrix exponential".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = matrix_exponential(&DMatrix::zeros(2, 2), 3.7).unwrap();
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn diagonal_is_exact() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_eq!(e[(0, 0)], (-1.0f64).exp());
        assert_eq!(e[(1, 1)], (-2.0f64).exp());
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent_jordan_block() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let t = 2.5;
        let e = matrix_exponential(&a, t).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, t, t * t / 2.0, 0.0, 1.0, t, 0.0, 0.0, 1.0]);
        assert!((e - expected).abs().max() < 1e-14);
    }

    #[test]
    fn rotation_generator() {
        let w = 7.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let t = 1.9;
        let e = matrix_exponential(&a, t).unwrap();
        let (s, c) = (w * t).sin_cos();
        let expected = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
        assert!((e - expected).abs().max() < 1e-13);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            matrix_exponential(&DMatrix::zeros(2, 3), 1.0),
            Err(Error::Dimension(_))
        ));
    }
}
