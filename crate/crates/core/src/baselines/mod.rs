//! Random-walk input baselines: augmented Kalman filter (AKF), AKF with
//! dummy displacement measurements (AKFdm), dual Kalman filter (DKF), and
//! L-curve tuning of their input noise.

mod akf;
mod dkf;
mod lcurve;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use akf::{akf_model, akfdm_model, with_dummy_observations, BaselineConfig};
pub use dkf::dkf_estimate;
pub use lcurve::{l_curve, lcurve_corner, menger_curvature, LCurve, LCurvePoint};

use crate::error::Result;
use crate::lfm::{estimate, EstimationResult, Prior};
use crate::structural::ContinuousStateSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Akf,
    Akfdm,
    Dkf,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Akf => "akf",
            BaselineMethod::Akfdm => "akfdm",
            BaselineMethod::Dkf => "dkf",
        }
    }
}

/// Everything a baseline run needs besides its tuning.
#[derive(Debug, Clone)]
pub struct BaselineProblem<'a> {
    pub ssm: &'a ContinuousStateSpace,
    pub dt: f64,
    /// Real measurement channels only; dummy observations are added here.
    pub y: &'a DMatrix<f64>,
    pub q_x: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub prior: &'a Prior,
}

/// Runs one baseline. AKF and AKFdm are filtered and, when `smooth` is set,
/// smoothed; the DKF is a filter only. Innovations and signal estimates are
/// trimmed to the real channels.
pub fn run_baseline(
    method: BaselineMethod,
    problem: &BaselineProblem<'_>,
    cfg: &BaselineConfig,
    smooth: bool,
) -> Result<EstimationResult> {
    let p = problem;
    match method {
        BaselineMethod::Akf => {
            let model = akf_model(p.ssm, cfg, p.q_x, p.r, p.prior)?.discretize(p.dt)?;
            estimate(&model, p.y, smooth)
        }
        BaselineMethod::Akfdm => {
            let model = akfdm_model(p.ssm, cfg, p.q_x, p.r, p.prior)?.discretize(p.dt)?;
            let y = with_dummy_observations(p.y, cfg.dummy_dofs.len());
            let mut res = estimate(&model, &y, smooth)?;
            let n_o = p.y.ncols();
            res.innovations = res.innovations.columns(0, n_o).into_owned();
            res.innovation_variance = res.innovation_variance.columns(0, n_o).into_owned();
            Ok(res)
        }
        BaselineMethod::Dkf => dkf_estimate(p.ssm, p.dt, p.y, cfg, p.q_x, p.r, p.prior),
    }
}
