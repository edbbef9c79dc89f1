use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelRealization;
use crate::numerics::{block_diag, discrete_process_noise, matrix_exponential};
use crate::structural::ContinuousStateSpace;

/// Where each block lives inside the augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    /// Number of structural (generalized) dofs; states `0..n_dof` are
    /// displacements and `n_dof..2 n_dof` velocities.
    pub n_dof: usize,
    /// Index range of each latent-force block `z⁽ʲ⁾`.
    pub force_blocks: Vec<Range<usize>>,
    /// Output row `H⁽ʲ⁾` with `f⁽ʲ⁾ = H⁽ʲ⁾ z⁽ʲ⁾`.
    pub force_outputs: Vec<DMatrix<f64>>,
}

impl StateLayout {
    pub fn n_structural(&self) -> usize {
        2 * self.n_dof
    }

    pub fn n_augmented(&self) -> usize {
        self.force_blocks
            .last()
            .map_or(self.n_structural(), |r| r.end)
    }

    pub fn n_forces(&self) -> usize {
        self.force_blocks.len()
    }

    pub fn displacements(&self) -> Range<usize> {
        0..self.n_dof
    }

    pub fn velocities(&self) -> Range<usize> {
        self.n_dof..2 * self.n_dof
    }

    /// `n_forces × n_a` matrix mapping the augmented state to the forces.
    pub fn force_map(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_forces(), self.n_augmented());
        for (j, (range, h)) in self.force_blocks.iter().zip(&self.force_outputs).enumerate() {
            out.view_mut((j, range.start), (1, range.len())).copy_from(h);
        }
        out
    }
}

/// Linear maps from the augmented state to every physical response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub displacement: DMatrix<f64>,
    pub velocity: DMatrix<f64>,
    pub acceleration: DMatrix<f64>,
    pub force: DMatrix<f64>,
}

/// Initial belief: structural prior `N(m_x0, P_x0)`; latent-force blocks
/// start from zero mean and their stationary covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub mean: Option<DVector<f64>>,
    pub p_x0: DMatrix<f64>,
}

impl Prior {
    /// `N(0, σ² I)` over the structural states.
    pub fn isotropic(n_states: usize, variance: f64) -> Self {
        Prior {
            mean: None,
            p_x0: DMatrix::identity(n_states, n_states) * variance,
        }
    }
}

/// Continuous-time augmented model `ẋₐ = F_ac xₐ + w̃`, `y = H_ac xₐ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub f_ac: DMatrix<f64>,
    pub h_ac: DMatrix<f64>,
    pub q_c: DMatrix<f64>,
    pub layout: StateLayout,
    pub response: ResponseMap,
    pub r: DMatrix<f64>,
    /// Covariance added to `Q_d` after sampling: `blkdiag(Q_x, 0, …)`, plus
    /// the per-step force block for random-walk baselines.
    pub q_step: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

/// Sampled augmented model ready for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub dt: f64,
    pub layout: StateLayout,
    pub response: ResponseMap,
}

pub(crate) fn check_symmetric(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::dim(format!("{name} must be {n}x{n}, got {:?}", m.shape())));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!("{name} must be symmetric")));
    }
    Ok(())
}

/// Builds the augmented GP latent force model from the structural model and
/// one kernel realization per input column.
pub fn assemble_augmented(
    ssm: &ContinuousStateSpace,
    kernels: &[KernelRealization],
    q_x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    prior: &Prior,
) -> Result<AugmentedModel> {
    let n_s = ssm.n_states();
    let n_f = ssm.n_inputs();
    let n_o = ssm.n_outputs();
    if kernels.len() != n_f {
        return Err(Error::Configuration(format!(
            "{} kernels supplied for {} inputs",
            kernels.len(),
            n_f
        )));
    }
    check_symmetric("Q_x", q_x, n_s)?;
    check_symmetric("R", r, n_o)?;
    if r.clone().cholesky().is_none() {
        return Err(Error::invalid("R must be positive definite"));
    }
    check_symmetric("P_x0", &prior.p_x0, n_s)?;

    let mut force_blocks = Vec::with_capacity(n_f);
    let mut start = n_s;
    for k in kernels {
        let m = k.order();
        if k.l.shape() != (m, 1) || k.h.shape() != (1, m) || k.p_inf.shape() != (m, m) {
            return Err(Error::dim("kernel realization has inconsistent block sizes"));
        }
        force_blocks.push(start..start + m);
        start += m;
    }
    let n_a = start;
    let layout = StateLayout {
        n_dof: n_s / 2,
        force_blocks,
        force_outputs: kernels.iter().map(|k| k.h.clone()).collect(),
    };

    let mut f_ac = DMatrix::zeros(n_a, n_a);
    f_ac.view_mut((0, 0), (n_s, n_s)).copy_from(&ssm.a_c);
    let mut h_ac = DMatrix::zeros(n_o, n_a);
    h_ac.view_mut((0, 0), (n_o, n_s)).copy_from(&ssm.g_c);
    let mut q_c = DMatrix::zeros(n_a, n_a);
    for (j, (k, range)) in kernels.iter().zip(&layout.force_blocks).enumerate() {
        let m = range.len();
        // B* = [b_j H⁽ʲ⁾ ...], J* = [j_j H⁽ʲ⁾ ...]
        f_ac.view_mut((0, range.start), (n_s, m))
            .copy_from(&(ssm.b_c.column(j) * &k.h));
        h_ac.view_mut((0, range.start), (n_o, m))
            .copy_from(&(ssm.j_c.column(j) * &k.h));
        f_ac.view_mut((range.start, range.start), (m, m)).copy_from(&k.f);
        q_c.view_mut((range.start, range.start), (m, m)).copy_from(&k.q_c());
    }

    let mut blocks: Vec<&DMatrix<f64>> = vec![&prior.p_x0];
    blocks.extend(kernels.iter().map(|k| &k.p_inf));
    let p0 = block_diag(&blocks);
    let m0 = match &prior.mean {
        Some(m) if m.len() == n_a => m.clone(),
        Some(m) => {
            return Err(Error::dim(format!(
                "prior mean has {} entries, augmented state has {n_a}",
                m.len()
            )))
        }
        None => DVector::zeros(n_a),
    };

    let response = response_map_for(ssm, &layout);
    let mut q_step = DMatrix::zeros(n_a, n_a);
    q_step.view_mut((0, 0), (n_s, n_s)).copy_from(q_x);
    Ok(AugmentedModel {
        f_ac,
        h_ac,
        q_c,
        layout,
        response,
        r: r.clone(),
        q_step,
        m0,
        p0,
    })
}

pub fn response_map_for(ssm: &ContinuousStateSpace, layout: &StateLayout) -> ResponseMap {
    let n = layout.n_dof;
    let n_a = layout.n_augmented();
    let t = &ssm.dof_map;
    let n_phys = t.nrows();
    let mut displacement = DMatrix::zeros(n_phys, n_a);
    displacement.view_mut((0, 0), (n_phys, n)).copy_from(t);
    let mut velocity = DMatrix::zeros(n_phys, n_a);
    velocity.view_mut((0, n), (n_phys, n)).copy_from(t);
    let force = layout.force_map();
    let mut acceleration = DMatrix::zeros(n_phys, n_a);
    acceleration
        .view_mut((0, 0), (n_phys, 2 * n))
        .copy_from(&ssm.acc_state);
    acceleration += &ssm.acc_input * &force;
    ResponseMap {
        displacement,
        velocity,
        acceleration,
        force,
    }
}

impl AugmentedModel {
    pub fn n_augmented(&self) -> usize {
        self.f_ac.nrows()
    }

    /// The force-block part of the drift matrix, `F*`.
    pub fn f_star(&self) -> DMatrix<f64> {
        let n_s = self.layout.n_structural();
        let m = self.n_augmented() - n_s;
        self.f_ac.view((n_s, n_s), (m, m)).into_owned()
    }

    /// Samples the model: `F_ad = exp(F_ac dt)`, `Q_a = Q_d + q_step`.
    pub fn discretize(&self, dt: f64) -> Result<DiscreteModel> {
        let f = matrix_exponential(&self.f_ac, dt)?;
        let q = discrete_process_noise(&self.f_ac, &self.q_c, dt)? + &self.q_step;
        Ok(DiscreteModel {
            f,
            h: self.h_ac.clone(),
            q,
            r: self.r.clone(),
            m0: self.m0.clone(),
            p0: self.p0.clone(),
            dt,
            layout: self.layout.clone(),
            response: self.response.clone(),
        })
    }
}

impl DiscreteModel {
    /// Generic time-invariant model without structural states, e.g. a bare
    /// kernel realization observed through `h`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_matrices(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        m0: DVector<f64>,
        p0: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let n = f.nrows();
        if !f.is_square() || h.ncols() != n || q.shape() != (n, n) || p0.shape() != (n, n) {
            return Err(Error::dim("inconsistent discrete model dimensions"));
        }
        if m0.len() != n || r.shape() != (h.nrows(), h.nrows()) {
            return Err(Error::dim("inconsistent prior or noise dimensions"));
        }
        let layout = StateLayout {
            n_dof: 0,
            force_blocks: vec![0..n],
            force_outputs: vec![h.rows(0, 1).into_owned()],
        };
        let force = layout.force_map();
        let response = ResponseMap {
            displacement: DMatrix::zeros(0, n),
            velocity: DMatrix::zeros(0, n),
            acceleration: DMatrix::zeros(0, n),
            force,
        };
        Ok(DiscreteModel {
            f,
            h,
            q,
            r,
            m0,
            p0,
            dt,
            layout,
            response,
        })
    }

    pub fn n_states(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.h.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_to_ssm, KernelSpec};
    use crate::structural::{assemble_continuous_ssm, build_shear_building, SensorLayout};

    fn sdof_ssm(m: f64, k: f64, c: f64) -> ContinuousStateSpace {
        let s = build_shear_building(&[m], &[k], (0.0, 0.0)).unwrap();
        let mut s = s.with_loads(&[0]).unwrap();
        s.c[(0, 0)] = c;
        assemble_continuous_ssm(&s, &SensorLayout::accelerations([0])).unwrap()
    }

    #[test]
    fn sdof_with_exponential_kernel() {
        let (m, k, c) = (2.0, 8.0, 0.4);
        let ssm = sdof_ssm(m, k, c);
        let spec = KernelSpec::matern(0, 1.0, 0.5);
        let kr = kernel_to_ssm(&spec).unwrap();
        let model = assemble_augmented(
            &ssm,
            &[kr],
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(1, 1),
            &Prior::isotropic(2, 0.0),
        )
        .unwrap();
        let lambda = 2.0;
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, -k / m, -c / m, 1.0 / m, 0.0, 0.0, -lambda],
        );
        assert!((&model.f_ac - expected).abs().max() < 1e-15);
        assert_eq!(model.q_c[(2, 2)], 2.0 * 1.0 / 0.5);
        assert_eq!(model.q_c.view((0, 0), (2, 3)).amax(), 0.0);
        assert_eq!(model.p0[(2, 2)], model.p0[(2, 2)].max(0.999_999_999_999));
    }

    #[test]
    fn building_dimensions() {
        let s = build_shear_building(&[200.0; 10], &[5e5; 10], (0.1, 5e-4))
            .unwrap()
            .with_loads(&[9])
            .unwrap();
        let ssm = assemble_continuous_ssm(&s, &SensorLayout::accelerations(0..10)).unwrap();
        let kr = kernel_to_ssm(&KernelSpec::matern(0, 1e6, 0.1)).unwrap();
        let model = assemble_augmented(
            &ssm,
            &[kr],
            &(DMatrix::identity(20, 20) * 1e-10),
            &(DMatrix::identity(10, 10) * 0.1),
            &Prior::isotropic(20, 1e-10),
        )
        .unwrap();
        assert_eq!(model.n_augmented(), 21);
        assert_eq!(model.layout.force_blocks, vec![20..21]);
        // block upper triangular
        assert!(model.f_ac.view((20, 0), (1, 20)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kernel_count_mismatch() {
        let ssm = sdof_ssm(1.0, 1.0, 0.0);
        let err = assemble_augmented(
            &ssm,
            &[],
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(1, 1),
            &Prior::isotropic(2, 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn discretization_of_noise_free_model() {
        let ssm = sdof_ssm(1.0, 4.0, 0.1);
        let kr = KernelRealization::random_walk(0.0, 1.0);
        let model = assemble_augmented(
            &ssm,
            &[kr],
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(1, 1),
            &Prior::isotropic(2, 0.0),
        )
        .unwrap();
        let d = model.discretize(0.01).unwrap();
        assert_eq!(d.q, DMatrix::zeros(3, 3));
    }

    #[test]
    fn scalar_latent_block_noise() {
        let ssm = sdof_ssm(1.0, 4.0, 0.1);
        let spec = KernelSpec::matern(0, 3.0, 0.25);
        let kr = kernel_to_ssm(&spec).unwrap();
        let model = assemble_augmented(
            &ssm,
            std::slice::from_ref(&kr),
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(1, 1),
            &Prior::isotropic(2, 0.0),
        )
        .unwrap();
        let dt = 0.02;
        let d = model.discretize(dt).unwrap();
        let lam = spec.lambda();
        let expected = kr.sigma_w * (1.0 - (-2.0 * lam * dt).exp()) / (2.0 * lam);
        assert!((d.q[(2, 2)] - expected).abs() < 1e-14 * expected.max(1.0));
    }
}
