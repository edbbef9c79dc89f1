use nalgebra::DMatrix;

use super::filter::{kalman_filter, rts_smoother, FilterRun, GaussianBelief};
use super::model::{DiscreteModel, ResponseMap};
use crate::error::Result;

/// Posterior mean and variance of one signal group, `N × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEstimate {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

impl SignalEstimate {
    pub fn zeros(n_steps: usize, n_channels: usize) -> Self {
        SignalEstimate {
            mean: DMatrix::zeros(n_steps, n_channels),
            variance: DMatrix::zeros(n_steps, n_channels),
        }
    }

    fn from_beliefs(beliefs: &[GaussianBelief], map: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(beliefs.len(), map.nrows());
        for (k, b) in beliefs.iter().enumerate() {
            let m = map * &b.mean;
            let mp = map * &b.cov;
            for i in 0..map.nrows() {
                out.mean[(k, i)] = m[i];
                out.variance[(k, i)] = mp.row(i).dot(&map.row(i)).max(0.0);
            }
        }
        out
    }
}

/// Estimates for every physical dof and every input force.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub displacement: SignalEstimate,
    pub velocity: SignalEstimate,
    pub acceleration: SignalEstimate,
    pub force: SignalEstimate,
}

pub fn extract_estimates(beliefs: &[GaussianBelief], response: &ResponseMap) -> Estimates {
    Estimates {
        displacement: SignalEstimate::from_beliefs(beliefs, &response.displacement),
        velocity: SignalEstimate::from_beliefs(beliefs, &response.velocity),
        acceleration: SignalEstimate::from_beliefs(beliefs, &response.acceleration),
        force: SignalEstimate::from_beliefs(beliefs, &response.force),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub filtered: Estimates,
    pub smoothed: Option<Estimates>,
    /// `N × n_o`, NaN on missing samples.
    pub innovations: DMatrix<f64>,
    /// Diagonal of `S_k`, `N × n_o`.
    pub innovation_variance: DMatrix<f64>,
    pub nll: f64,
}

impl EstimationResult {
    pub fn len(&self) -> usize {
        self.innovations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smoothed estimates when available, filtered otherwise.
    pub fn best(&self) -> &Estimates {
        self.smoothed.as_ref().unwrap_or(&self.filtered)
    }

    pub fn from_run(run: &FilterRun, smoothed: Option<&[GaussianBelief]>, response: &ResponseMap) -> Self {
        EstimationResult {
            filtered: extract_estimates(&run.filtered, response),
            smoothed: smoothed.map(|s| extract_estimates(s, response)),
            innovations: run.innovations.clone(),
            innovation_variance: run.innovation_variances(),
            nll: run.nll,
        }
    }
}

/// Filter, optionally smooth, and extract the physical estimates.
pub fn estimate(model: &DiscreteModel, y: &DMatrix<f64>, smooth: bool) -> Result<EstimationResult> {
    let run = kalman_filter(model, y)?;
    let smoothed = if smooth {
        Some(rts_smoother(model, &run)?)
    } else {
        None
    };
    Ok(EstimationResult::from_run(&run, smoothed.as_deref(), &model.response))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_to_ssm, KernelSpec};
    use crate::lfm::{assemble_augmented, Prior};
    use crate::structural::{assemble_continuous_ssm, build_shear_building, SensorLayout};

    fn sdof_model(p: u32) -> DiscreteModel {
        let s = build_shear_building(&[1.0], &[10.0], (0.1, 0.0))
            .unwrap()
            .with_loads(&[0])
            .unwrap();
        let ssm = assemble_continuous_ssm(&s, &SensorLayout::accelerations([0])).unwrap();
        let kr = kernel_to_ssm(&KernelSpec::matern(p, 4.0, 0.3)).unwrap();
        assemble_augmented(
            &ssm,
            &[kr],
            &(DMatrix::identity(2, 2) * 1e-10),
            &(DMatrix::identity(1, 1) * 0.1),
            &Prior::isotropic(2, 1e-10),
        )
        .unwrap()
        .discretize(0.01)
        .unwrap()
    }

    #[test]
    fn prior_force_variance_is_alpha2() {
        let model = sdof_model(2);
        let prior = GaussianBelief {
            mean: model.m0.clone(),
            cov: model.p0.clone(),
        };
        let est = extract_estimates(&[prior], &model.response);
        assert_eq!(est.force.mean[(0, 0)], 0.0);
        assert!((est.force.variance[(0, 0)] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn force_is_first_latent_component() {
        for p in [0, 2] {
            let model = sdof_model(p);
            let map = &model.response.force;
            assert_eq!(map[(0, 2)], 1.0);
            assert_eq!(map.iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn acceleration_matches_measurement_map() {
        // sensor on the only dof: acceleration map equals H
        let model = sdof_model(1);
        assert!((&model.response.acceleration - &model.h).amax() < 1e-15);
    }

    #[test]
    fn pipeline_shapes() {
        let model = sdof_model(0);
        let y = DMatrix::from_fn(40, 1, |k, _| (k as f64 * 0.3).sin());
        let res = estimate(&model, &y, true).unwrap();
        assert_eq!(res.len(), 40);
        assert_eq!(res.best().displacement.mean.shape(), (40, 1));
        assert!(res.filtered.force.variance.iter().all(|v| *v >= 0.0));
    }
}
