use rayon::prelude::*;
use serde::Serialize;

use super::{run_baseline, BaselineConfig, BaselineMethod, BaselineProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LCurvePoint {
    /// Scalar `q` with `Q_f = q I`.
    pub q_f: f64,
    /// Spectral norm of `Q_f`.
    pub q_norm: f64,
    /// `Σ_k ‖e_k‖` over the real channels; NaN when the run failed.
    pub residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LCurve {
    pub method: BaselineMethod,
    pub points: Vec<LCurvePoint>,
    /// Curvature at each successful interior point, `None` elsewhere.
    pub curvature: Vec<Option<f64>>,
    /// Index into `points` of the selected corner.
    pub corner: usize,
}

impl LCurve {
    pub fn corner_q_f(&self) -> f64 {
        self.points[self.corner].q_f
    }
}

/// Signed curvature of the circle through three points; positive when the
/// path turns counter-clockwise.
pub fn menger_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let ab = (b.0 - a.0).hypot(b.1 - a.1);
    let bc = (c.0 - b.0).hypot(c.1 - b.1);
    let ca = (a.0 - c.0).hypot(a.1 - c.1);
    let denom = ab * bc * ca;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Index of the maximum-curvature point of the log-log polyline through
/// `(x_i, y_i)`, with both log axes rescaled to unit range so the result does
/// not depend on the units of either quantity. Returns the per-point
/// curvature alongside the corner.
pub fn lcurve_corner(x: &[f64], y: &[f64]) -> Option<(usize, Vec<f64>)> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let span = |v: &[f64]| {
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        (lo, (hi - lo).max(f64::MIN_POSITIVE))
    };
    let (x0, sx) = span(&lx);
    let (y0, sy) = span(&ly);
    let pts: Vec<(f64, f64)> = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| ((a - x0) / sx, (b - y0) / sy))
        .collect();
    let mut kappa = vec![0.0; pts.len()];
    for i in 1..pts.len() - 1 {
        kappa[i] = menger_curvature(pts[i - 1], pts[i], pts[i + 1]);
    }
    let mut best = 1;
    for i in 2..pts.len() - 1 {
        if kappa[i] > kappa[best] {
            best = i;
        }
    }
    Some((best, kappa))
}

/// Runs the baseline once per grid value of `Q_f = q I` and picks the corner
/// of the (‖Q_f‖, Σ‖e_k‖) curve. Failed grid points are kept with their error
/// and skipped.
pub fn l_curve(
    method: BaselineMethod,
    problem: &BaselineProblem<'_>,
    base: &BaselineConfig,
    grid: &[f64],
) -> Result<LCurve> {
    if grid.len() < 5 {
        return Err(Error::invalid("L-curve grid needs at least five values"));
    }
    if grid.iter().any(|q| !(q.is_finite() && *q > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("L-curve grid must be positive and increasing"));
    }
    let n_f = problem.ssm.n_inputs();
    let points: Vec<LCurvePoint> = grid
        .par_iter()
        .map(|&q| {
            let mut cfg = base.clone();
            cfg.q_f = nalgebra::DMatrix::identity(n_f, n_f) * q;
            cfg.p_f0 = None;
            match run_baseline(method, problem, &cfg, false) {
                Ok(res) => {
                    let residual: f64 = res
                        .innovations
                        .row_iter()
                        .map(|e| e.iter().filter(|v| !v.is_nan()).map(|v| v * v).sum::<f64>().sqrt())
                        .sum();
                    LCurvePoint { q_f: q, q_norm: q, residual, error: None }
                }
                Err(e) => LCurvePoint { q_f: q, q_norm: q, residual: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect();
    let ok: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].error.is_none() && points[i].residual > 0.0)
        .collect();
    let xs: Vec<f64> = ok.iter().map(|&i| points[i].q_norm).collect();
    let ys: Vec<f64> = ok.iter().map(|&i| points[i].residual).collect();
    let (corner, kappa) = lcurve_corner(&xs, &ys).ok_or_else(|| {
        Error::Optimization(format!(
            "L-curve needs three successful grid points, got {}",
            ok.len()
        ))
    })?;
    let mut curvature = vec![None; points.len()];
    for (j, &i) in ok.iter().enumerate().skip(1).take(ok.len() - 2) {
        curvature[i] = Some(kappa[j]);
    }
    Ok(LCurve {
        method,
        points,
        curvature,
        corner: ok[corner],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_of_circle() {
        let k = menger_curvature((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0));
        assert!((k - 1.0).abs() < 1e-12);
        assert!((menger_curvature((-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)) + 1.0).abs() < 1e-12);
        assert_eq!(menger_curvature((0.0, 0.0), (1.0, 1.0), (2.0, 2.0)), 0.0);
    }

    #[test]
    fn corner_of_hinge() {
        // steep descent flattening out at x = 1e4
        let x: Vec<f64> = (0..9).map(|i| 10f64.powi(i)).collect();
        let y: Vec<f64> = (0..9)
            .map(|i| if i <= 4 { 10f64.powi(8 - 2 * i) } else { 1.0 - 0.001 * i as f64 })
            .collect();
        let (c, _) = lcurve_corner(&x, &y).unwrap();
        assert_eq!(c, 4);
    }

    #[test]
    fn too_few_points() {
        assert!(lcurve_corner(&[1.0, 2.0], &[1.0, 2.0]).is_none());
        assert!(lcurve_corner(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_none());
    }
}
