use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::akf::BaselineConfig;
use crate::error::{Error, Result};
use crate::lfm::{
    extract_estimates, response_map_for, EstimationResult, GaussianBelief, Prior, StateLayout,
};
use crate::numerics::{block_diag, discretize_zoh, symmetrize};
use crate::structural::ContinuousStateSpace;

/// Feedthrough norms below this are treated as zero.
const FEEDTHROUGH_TOL: f64 = 1e-300;

fn factor(s: &DMatrix<f64>, k: usize, what: &str) -> Result<Cholesky<f64, Dyn>> {
    s.clone().cholesky().ok_or_else(|| Error::Conditioning {
        step: k,
        context: format!("{what} innovation covariance is not positive definite"),
    })
}

/// Dual Kalman filter. Each sample runs a random-walk input prediction and an
/// input update through the feedthrough, then a state update using the
/// updated input; the state is then propagated with that input.
pub fn dkf_estimate(
    ssm: &ContinuousStateSpace,
    dt: f64,
    y: &DMatrix<f64>,
    cfg: &BaselineConfig,
    q_x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    prior: &Prior,
) -> Result<EstimationResult> {
    let n_s = ssm.n_states();
    let n_f = ssm.n_inputs();
    let n_o = ssm.n_outputs();
    cfg.validate(n_f)?;
    if y.ncols() != n_o {
        return Err(Error::dim(format!(
            "measurements have {} channels, model has {n_o} outputs",
            y.ncols()
        )));
    }
    if r.shape() != (n_o, n_o) || q_x.shape() != (n_s, n_s) || prior.p_x0.shape() != (n_s, n_s) {
        return Err(Error::dim("R, Q_x or P_x0 has the wrong shape"));
    }
    let j = &ssm.j_c;
    if j.norm() <= FEEDTHROUGH_TOL {
        return Err(Error::Degeneracy(
            "feedthrough matrix J is zero, so the DKF input update has zero gain".into(),
        ));
    }
    let (a, b) = discretize_zoh(&ssm.a_c, &ssm.b_c, dt)?;
    let g = &ssm.g_c;
    let (g_t, j_t, a_t) = (g.transpose(), j.transpose(), a.transpose());

    // x and px hold the predicted state x_{k|k-1} at the top of each step
    let (mut x, mut p_input) = match &prior.mean {
        Some(m) if m.len() == n_s + n_f => (m.rows(0, n_s).into_owned(), m.rows(n_s, n_f).into_owned()),
        Some(_) => return Err(Error::dim("prior mean does not match [x; f]")),
        None => (DVector::zeros(n_s), DVector::zeros(n_f)),
    };
    let mut px = prior.p_x0.clone();
    let mut pp = cfg.initial_input_cov().clone();

    let n_steps = y.nrows();
    let mut beliefs = Vec::with_capacity(n_steps);
    let mut innovations = DMatrix::from_element(n_steps, n_o, f64::NAN);
    let mut innovation_variance = DMatrix::from_element(n_steps, n_o, f64::NAN);
    let mut nll = 0.0;
    for k in 0..n_steps {
        let yk = y.row(k).transpose();
        if yk.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("DKF does not support missing samples"));
        }
        // input prediction and update
        let pp_pred = &pp + &cfg.q_f;
        let s_p = symmetrize(&(j * &pp_pred * &j_t + r));
        let rhs = j * &pp_pred;
        let gain_p = factor(&s_p, k, "input")?.solve(&rhs).transpose();
        let e_p = &yk - g * &x - j * &p_input;
        p_input += &gain_p * e_p;
        pp = symmetrize(&(&pp_pred - &gain_p * j * &pp_pred));

        // state update with the updated input
        let s_x = symmetrize(&(g * &px * &g_t + r));
        let rhs = g * &px;
        let chol = factor(&s_x, k, "state")?;
        let gain_x = chol.solve(&rhs).transpose();
        let e = &yk - g * &x - j * &p_input;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        nll += log_det + e.dot(&chol.solve(&e));
        x += &gain_x * &e;
        px = symmetrize(&(&px - &gain_x * g * &px));

        for c in 0..n_o {
            innovations[(k, c)] = e[c];
            innovation_variance[(k, c)] = s_x[(c, c)];
        }
        let mut mean = DVector::zeros(n_s + n_f);
        mean.rows_mut(0, n_s).copy_from(&x);
        mean.rows_mut(n_s, n_f).copy_from(&p_input);
        beliefs.push(GaussianBelief {
            mean,
            cov: block_diag(&[&px, &pp]),
        });

        // state prediction for the next sample
        x = &a * &x + &b * &p_input;
        px = symmetrize(&(&a * &px * &a_t + q_x));
    }

    let layout = StateLayout {
        n_dof: ssm.n_dof(),
        force_blocks: (0..n_f).map(|i| n_s + i..n_s + i + 1).collect(),
        force_outputs: vec![DMatrix::identity(1, 1); n_f],
    };
    let response = response_map_for(ssm, &layout);
    Ok(EstimationResult {
        filtered: extract_estimates(&beliefs, &response),
        smoothed: None,
        innovations,
        innovation_variance,
        nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{
        assemble_continuous_ssm, build_shear_building, SensorLayout, StructuralSystem,
    };

    fn sdof_ssm() -> ContinuousStateSpace {
        let s = build_shear_building(&[1.0], &[100.0], (0.5, 0.0))
            .unwrap()
            .with_loads(&[0])
            .unwrap();
        assemble_continuous_ssm(&s, &SensorLayout::accelerations([0])).unwrap()
    }

    fn run(ssm: &ContinuousStateSpace, y: &DMatrix<f64>, q_f: f64) -> Result<EstimationResult> {
        dkf_estimate(
            ssm,
            0.01,
            y,
            &BaselineConfig::isotropic(1, q_f),
            &(DMatrix::identity(2, 2) * 1e-10),
            &(DMatrix::identity(1, 1) * 1e-6),
            &Prior::isotropic(2, 1e-10),
        )
    }

    #[test]
    fn recovers_constant_force() {
        let ssm = sdof_ssm();
        let dt = 0.01;
        let (a, b) = discretize_zoh(&ssm.a_c, &ssm.b_c, dt).unwrap();
        let force = 5.0;
        let mut x = DVector::zeros(2);
        let mut y = DMatrix::zeros(200, 1);
        for k in 0..200 {
            y[(k, 0)] = (&ssm.g_c * &x)[0] + ssm.j_c[(0, 0)] * force;
            x = &a * &x + &b * DVector::from_element(1, force);
        }
        let res = run(&ssm, &y, 1.0).unwrap();
        let est = res.filtered.force.mean[(99, 0)];
        assert!((est - force).abs() < 0.01 * force, "estimate {est}");
    }

    #[test]
    fn zero_q_f_freezes_input() {
        let ssm = sdof_ssm();
        let y = DMatrix::from_fn(50, 1, |k, _| (k as f64).sin());
        let res = run(&ssm, &y, 0.0).unwrap();
        assert!(res.filtered.force.mean.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_feedthrough_is_degenerate() {
        let s = StructuralSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 0),
            DMatrix::zeros(1, 0),
        )
        .unwrap()
        .with_ground_motion()
        .unwrap();
        let ssm = assemble_continuous_ssm(&s, &SensorLayout::accelerations([0])).unwrap();
        let err = run(&ssm, &DMatrix::zeros(10, 1), 1.0).unwrap_err();
        assert!(matches!(err, Error::Degeneracy(_)));
        assert_eq!(err.exit_code(), 4);
    }
}
