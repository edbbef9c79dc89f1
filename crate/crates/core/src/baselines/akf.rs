use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lfm::{response_map_for, AugmentedModel, Prior, StateLayout};
use crate::numerics::block_diag;
use crate::structural::{selection_matrix, ContinuousStateSpace};

/// Tuning shared by the random-walk input baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Per-step covariance of the fictitious input noise (N²), `n_f × n_f`.
    pub q_f: DMatrix<f64>,
    /// Initial input covariance; defaults to `q_f`.
    pub p_f0: Option<DMatrix<f64>>,
    /// Dummy displacement noise covariance (m²), AKFdm only.
    pub r_dm: Option<DMatrix<f64>>,
    /// Physical dofs that receive zero-valued displacement observations.
    pub dummy_dofs: Vec<usize>,
}

impl BaselineConfig {
    /// `Q_f = q I`.
    pub fn isotropic(n_inputs: usize, q: f64) -> Self {
        BaselineConfig {
            q_f: DMatrix::identity(n_inputs, n_inputs) * q,
            p_f0: None,
            r_dm: None,
            dummy_dofs: Vec::new(),
        }
    }

    pub fn with_dummies(mut self, dofs: Vec<usize>, r_dm: f64) -> Self {
        self.r_dm = Some(DMatrix::identity(dofs.len(), dofs.len()) * r_dm);
        self.dummy_dofs = dofs;
        self
    }

    pub fn initial_input_cov(&self) -> &DMatrix<f64> {
        self.p_f0.as_ref().unwrap_or(&self.q_f)
    }

    pub(crate) fn validate(&self, n_f: usize) -> Result<()> {
        if self.q_f.shape() != (n_f, n_f) {
            return Err(Error::dim(format!(
                "Q_f must be {n_f}x{n_f}, got {:?}",
                self.q_f.shape()
            )));
        }
        if self.initial_input_cov().shape() != (n_f, n_f) {
            return Err(Error::dim("P_f0 must match Q_f"));
        }
        for m in [&self.q_f, self.initial_input_cov()] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
                return Err(Error::invalid("input covariances must be symmetric"));
            }
            if m.iter().any(|v| !v.is_finite()) || m.diagonal().iter().any(|v| *v < 0.0) {
                return Err(Error::invalid("input covariances must be finite and PSD"));
            }
        }
        Ok(())
    }
}

/// Augmented Kalman filter model: forces appended to the state with zero
/// drift, `H = [G_c J_c]`, and `blkdiag(Q_x, Q_f)` added every step.
pub fn akf_model(
    ssm: &ContinuousStateSpace,
    cfg: &BaselineConfig,
    q_x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    prior: &Prior,
) -> Result<AugmentedModel> {
    let n_s = ssm.n_states();
    let n_f = ssm.n_inputs();
    let n_o = ssm.n_outputs();
    cfg.validate(n_f)?;
    if q_x.shape() != (n_s, n_s) || prior.p_x0.shape() != (n_s, n_s) {
        return Err(Error::dim("Q_x and P_x0 must match the structural state"));
    }
    if r.shape() != (n_o, n_o) || r.clone().cholesky().is_none() {
        return Err(Error::invalid(format!("R must be a {n_o}x{n_o} SPD matrix")));
    }
    let n_a = n_s + n_f;
    let mut f_ac = DMatrix::zeros(n_a, n_a);
    f_ac.view_mut((0, 0), (n_s, n_s)).copy_from(&ssm.a_c);
    f_ac.view_mut((0, n_s), (n_s, n_f)).copy_from(&ssm.b_c);
    let mut h_ac = DMatrix::zeros(n_o, n_a);
    h_ac.view_mut((0, 0), (n_o, n_s)).copy_from(&ssm.g_c);
    h_ac.view_mut((0, n_s), (n_o, n_f)).copy_from(&ssm.j_c);

    let layout = StateLayout {
        n_dof: n_s / 2,
        force_blocks: (0..n_f).map(|j| n_s + j..n_s + j + 1).collect(),
        force_outputs: vec![DMatrix::identity(1, 1); n_f],
    };
    let m0 = match &prior.mean {
        Some(m) if m.len() == n_a => m.clone(),
        Some(_) => return Err(Error::dim("prior mean does not match the AKF state")),
        None => DVector::zeros(n_a),
    };
    let response = response_map_for(ssm, &layout);
    Ok(AugmentedModel {
        f_ac,
        h_ac,
        q_c: DMatrix::zeros(n_a, n_a),
        layout,
        response,
        r: r.clone(),
        q_step: block_diag(&[q_x, &cfg.q_f]),
        m0,
        p0: block_diag(&[&prior.p_x0, cfg.initial_input_cov()]),
    })
}

/// AKF with zero-valued dummy displacement observations appended after the
/// real channels, weighted by `R_dm`.
pub fn akfdm_model(
    ssm: &ContinuousStateSpace,
    cfg: &BaselineConfig,
    q_x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    prior: &Prior,
) -> Result<AugmentedModel> {
    if cfg.dummy_dofs.is_empty() {
        return Err(Error::Configuration("AKFdm needs at least one dummy dof".into()));
    }
    let r_dm = cfg
        .r_dm
        .as_ref()
        .ok_or_else(|| Error::Configuration("AKFdm needs R_dm".into()))?;
    let n_dm = cfg.dummy_dofs.len();
    if r_dm.shape() != (n_dm, n_dm) || r_dm.clone().cholesky().is_none() {
        return Err(Error::invalid(format!("R_dm must be a {n_dm}x{n_dm} SPD matrix")));
    }
    let n_phys = ssm.n_physical();
    if let Some(&d) = cfg.dummy_dofs.iter().find(|&&d| d >= n_phys) {
        return Err(Error::invalid(format!(
            "dummy dof {d} out of range for {n_phys} dofs"
        )));
    }
    let mut model = akf_model(ssm, cfg, q_x, r, prior)?;
    let n = ssm.n_dof();
    let n_a = model.n_augmented();
    let n_o = model.h_ac.nrows();
    let mut h = DMatrix::zeros(n_o + n_dm, n_a);
    h.view_mut((0, 0), (n_o, n_a)).copy_from(&model.h_ac);
    let rows = selection_matrix(&cfg.dummy_dofs, n_phys) * &ssm.dof_map;
    h.view_mut((n_o, 0), (n_dm, n)).copy_from(&rows);
    model.h_ac = h;
    model.r = block_diag(&[r, r_dm]);
    Ok(model)
}

/// Appends `n_dummy` zero-valued columns to a measurement matrix.
pub fn with_dummy_observations(y: &DMatrix<f64>, n_dummy: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols() + n_dummy);
    out.view_mut((0, 0), y.shape()).copy_from(y);
    out
}
