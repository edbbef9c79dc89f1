use nalgebra::{DMatrix, DVector};

use super::model::DiscreteModel;
use crate::error::{Error, Result};
use crate::numerics::symmetrize;

/// Mean and covariance of the augmented state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Covariance update used after each measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// `(I − KH) P (I − KH)ᵀ + K R Kᵀ`
    #[default]
    Joseph,
    /// `P − K S Kᵀ`
    Standard,
}

/// Output of a forward filtering pass. `filtered[k]` is the belief after
/// assimilating row `k` of the measurements.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub prior: GaussianBelief,
    pub filtered: Vec<GaussianBelief>,
    /// Innovation `e_k`, NaN on missing channels.
    pub innovations: DMatrix<f64>,
    /// Innovation covariance `S_k` restricted to the channels observed at
    /// step `k`, in channel order.
    pub innovation_covs: Vec<DMatrix<f64>>,
    pub nll: f64,
}

impl FilterRun {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    /// Diagonal of `S_k` expanded to all channels (NaN where missing).
    pub fn innovation_variances(&self) -> DMatrix<f64> {
        let mut out = DMatrix::from_element(self.innovations.nrows(), self.innovations.ncols(), f64::NAN);
        for (k, s) in self.innovation_covs.iter().enumerate() {
            let mut d = 0;
            for c in 0..self.innovations.ncols() {
                if !self.innovations[(k, c)].is_nan() {
                    out[(k, c)] = s[(d, d)];
                    d += 1;
                }
            }
        }
        out
    }
}

fn check_measurements(model: &DiscreteModel, y: &DMatrix<f64>) -> Result<()> {
    if y.ncols() != model.n_outputs() {
        return Err(Error::dim(format!(
            "measurements have {} channels, model has {} outputs",
            y.ncols(),
            model.n_outputs()
        )));
    }
    if y.iter().any(|v| v.is_infinite()) {
        return Err(Error::invalid("measurements contain infinite values"));
    }
    Ok(())
}

struct Step {
    innovation: DVector<f64>,
    s: DMatrix<f64>,
    nll: f64,
}

/// Predict-then-update for one sample. Missing (NaN) channels are dropped
/// from the update; an all-missing row is a pure prediction.
fn step(
    model: &DiscreteModel,
    form: UpdateForm,
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    y: &[f64],
    k: usize,
) -> Result<Option<Step>> {
    *mean = &model.f * &*mean;
    *cov = symmetrize(&(&model.f * &*cov * model.f.transpose() + &model.q));

    let observed: Vec<usize> = (0..y.len()).filter(|&c| !y[c].is_nan()).collect();
    if observed.is_empty() {
        return Ok(None);
    }
    let (h, r, y_obs) = if observed.len() == y.len() {
        (model.h.clone(), model.r.clone(), DVector::from_column_slice(y))
    } else {
        let h = model.h.select_rows(&observed);
        let r = model.r.select_rows(&observed).select_columns(&observed);
        let y_obs = DVector::from_iterator(observed.len(), observed.iter().map(|&c| y[c]));
        (h, r, y_obs)
    };

    let e = &y_obs - &h * &*mean;
    let ph_t = &*cov * h.transpose();
    let s = symmetrize(&(&h * &ph_t + &r));
    let chol = s.clone().cholesky().ok_or_else(|| Error::Conditioning {
        step: k,
        context: "innovation covariance is not positive definite".into(),
    })?;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let s_inv_e = chol.solve(&e);
    let nll = log_det + e.dot(&s_inv_e);
    if !nll.is_finite() {
        return Err(Error::Conditioning {
            step: k,
            context: "non-finite likelihood term".into(),
        });
    }
    // K = P Hᵀ S⁻¹
    let gain = chol.solve(&ph_t.transpose()).transpose();
    *mean += &gain * &e;
    *cov = match form {
        UpdateForm::Joseph => {
            let n = cov.nrows();
            let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &h;
            &i_kh * &*cov * i_kh.transpose() + &gain * &r * gain.transpose()
        }
        UpdateForm::Standard => &*cov - &gain * &s * gain.transpose(),
    };
    *cov = symmetrize(cov);
    Ok(Some(Step { innovation: e, s, nll }))
}

/// Forward Kalman filter over `y` (N × n_o, NaN = missing), starting from
/// the model prior.
pub fn kalman_filter(model: &DiscreteModel, y: &DMatrix<f64>) -> Result<FilterRun> {
    kalman_filter_with(model, y, UpdateForm::Joseph)
}

pub fn kalman_filter_with(
    model: &DiscreteModel,
    y: &DMatrix<f64>,
    form: UpdateForm,
) -> Result<FilterRun> {
    check_measurements(model, y)?;
    let n_steps = y.nrows();
    let n_o = y.ncols();
    let mut mean = model.m0.clone();
    let mut cov = model.p0.clone();
    let mut filtered = Vec::with_capacity(n_steps);
    let mut innovations = DMatrix::from_element(n_steps, n_o, f64::NAN);
    let mut innovation_covs = Vec::with_capacity(n_steps);
    let mut nll = 0.0;
    let mut row = vec![0.0; n_o];
    for k in 0..n_steps {
        row.iter_mut().enumerate().for_each(|(c, v)| *v = y[(k, c)]);
        match step(model, form, &mut mean, &mut cov, &row, k)? {
            Some(st) => {
                let mut d = 0;
                for c in 0..n_o {
                    if !row[c].is_nan() {
                        innovations[(k, c)] = st.innovation[d];
                        d += 1;
                    }
                }
                innovation_covs.push(st.s);
                nll += st.nll;
            }
            None => innovation_covs.push(DMatrix::zeros(0, 0)),
        }
        filtered.push(GaussianBelief {
            mean: mean.clone(),
            cov: cov.clone(),
        });
    }
    Ok(FilterRun {
        prior: GaussianBelief {
            mean: model.m0.clone(),
            cov: model.p0.clone(),
        },
        filtered,
        innovations,
        innovation_covs,
        nll,
    })
}

/// Innovations negative log-likelihood `Σ log det S_k + e_kᵀ S_k⁻¹ e_k`
/// without storing the trajectory.
///
/// Once the filtered covariance stops changing (relative change below
/// `1e-12`) on fully observed rows, the gain and `S` are frozen and only the
/// mean is propagated; a row with missing channels resumes the full recursion.
pub fn negative_log_likelihood(model: &DiscreteModel, y: &DMatrix<f64>) -> Result<f64> {
    check_measurements(model, y)?;
    let mut mean = model.m0.clone();
    let mut cov = model.p0.clone();
    let mut nll = 0.0;
    let mut row = vec![0.0; y.ncols()];
    let mut frozen: Option<SteadyState> = None;
    for k in 0..y.nrows() {
        row.iter_mut().enumerate().for_each(|(c, v)| *v = y[(k, c)]);
        let complete = row.iter().all(|v| !v.is_nan());
        if let (Some(ss), true) = (&frozen, complete) {
            mean = &model.f * &mean;
            let e = DVector::from_column_slice(&row) - &model.h * &mean;
            let term = ss.log_det + e.dot(&ss.chol.solve(&e));
            if !term.is_finite() {
                return Err(Error::Conditioning {
                    step: k,
                    context: "non-finite likelihood term".into(),
                });
            }
            nll += term;
            mean += &ss.gain * e;
            continue;
        }
        frozen = None;
        let before = cov.clone();
        if let Some(st) = step(model, UpdateForm::Joseph, &mut mean, &mut cov, &row, k)? {
            nll += st.nll;
            let scale = cov.abs().max();
            if complete && k > 0 && (&cov - &before).abs().max() <= 1e-12 * scale {
                frozen = SteadyState::new(model, &cov);
            }
        }
    }
    Ok(nll)
}

struct SteadyState {
    gain: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl SteadyState {
    /// `filtered` is the converged filtered covariance; the gain is rebuilt
    /// from the matching predicted covariance.
    fn new(model: &DiscreteModel, filtered: &DMatrix<f64>) -> Option<Self> {
        let pred = symmetrize(&(&model.f * filtered * model.f.transpose() + &model.q));
        let ph_t = pred * model.h.transpose();
        let chol = symmetrize(&(&model.h * &ph_t + &model.r)).cholesky()?;
        let gain = chol.solve(&ph_t.transpose()).transpose();
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(Self { gain, chol, log_det })
    }
}

/// Fixed-interval Rauch–Tung–Striebel smoother.
pub fn rts_smoother(model: &DiscreteModel, run: &FilterRun) -> Result<Vec<GaussianBelief>> {
    let n = run.filtered.len();
    let mut out = run.filtered.clone();
    if n < 2 {
        return Ok(out);
    }
    let f_t = model.f.transpose();
    for k in (0..n - 1).rev() {
        let cur = &run.filtered[k];
        let m_pred = &model.f * &cur.mean;
        let p_pred = symmetrize(&(&model.f * &cur.cov * &f_t + &model.q));
        // Gᵀ = P_pred⁻¹ F P
        let rhs = &model.f * &cur.cov;
        let g_t = match p_pred.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => p_pred.clone().lu().solve(&rhs).ok_or_else(|| Error::Conditioning {
                step: k + 1,
                context: "predicted covariance is singular in the smoother".into(),
            })?,
        };
        let g = g_t.transpose();
        let next = &out[k + 1];
        let mean = &cur.mean + &g * (&next.mean - m_pred);
        let cov = symmetrize(&(&cur.cov + &g * (&next.cov - p_pred) * &g_t));
        out[k] = GaussianBelief { mean, cov };
    }
    Ok(out)
}
