//! Mass, damping and stiffness assembly for chain-type structures, modal
//! analysis and truncation, and the continuous-time structural state-space
//! model with its measurement equation.
//!
//! State ordering is `x = [u; u̇]`; the input vector is `f = [p; ü_g]` with
//! external loads first and ground accelerations last. Acceleration outputs
//! are absolute accelerations, so ground-motion columns of the feedthrough
//! matrix are zero.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Second-order structural model `M ü + C u̇ + K u = S_p p − M S_g ü_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSystem {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Load influence matrix, `n × n_p`.
    pub s_p: DMatrix<f64>,
    /// Ground-motion influence matrix, `n × n_g`.
    pub s_g: DMatrix<f64>,
    /// Maps generalized coordinates to physical dofs (`n_phys × n`). `None`
    /// means the coordinates are the physical dofs.
    pub dof_map: Option<DMatrix<f64>>,
}

impl StructuralSystem {
    pub fn new(
        m: DMatrix<f64>,
        c: DMatrix<f64>,
        k: DMatrix<f64>,
        s_p: DMatrix<f64>,
        s_g: DMatrix<f64>,
    ) -> Result<Self> {
        let sys = StructuralSystem {
            m,
            c,
            k,
            s_p,
            s_g,
            dof_map: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.m.nrows();
        if n == 0 {
            return Err(Error::invalid("structural system needs at least one dof"));
        }
        for (name, mat) in [("M", &self.m), ("C", &self.c), ("K", &self.k)] {
            if mat.shape() != (n, n) {
                return Err(Error::dim(format!("{name} must be {n}x{n}, got {:?}", mat.shape())));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
            let scale = mat.amax().max(f64::MIN_POSITIVE);
            if (mat - mat.transpose()).amax() > 1e-10 * scale {
                return Err(Error::invalid(format!("{name} is not symmetric")));
            }
        }
        if self.m.clone().cholesky().is_none() {
            return Err(Error::invalid("mass matrix is not positive definite"));
        }
        for (name, mat) in [("C", &self.c), ("K", &self.k)] {
            let scale = mat.amax();
            let min_eig = SymmetricEigen::new(mat.clone()).eigenvalues.min();
            if min_eig < -1e-9 * scale {
                return Err(Error::invalid(format!(
                    "{name} is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
        }
        if self.s_p.nrows() != n || self.s_g.nrows() != n {
            return Err(Error::dim("influence matrices must have one row per dof"));
        }
        if let Some(t) = &self.dof_map {
            if t.ncols() != n {
                return Err(Error::dim("dof map must have one column per generalized dof"));
            }
        }
        Ok(())
    }

    pub fn n_dof(&self) -> usize {
        self.m.nrows()
    }

    /// Number of physical dofs that sensors can address.
    pub fn n_physical(&self) -> usize {
        self.dof_map.as_ref().map_or(self.n_dof(), |t| t.nrows())
    }

    pub fn n_loads(&self) -> usize {
        self.s_p.ncols()
    }

    pub fn n_ground(&self) -> usize {
        self.s_g.ncols()
    }

    /// Physical displacement map `T` with `u_phys = T q`.
    pub fn physical_map(&self) -> DMatrix<f64> {
        self.dof_map
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.n_dof(), self.n_dof()))
    }

    /// Adds one external load column per listed dof (0-based).
    ///
    /// For reduced systems the load is applied at the physical dof and
    /// projected onto the generalized coordinates.
    pub fn with_loads(mut self, dofs: &[usize]) -> Result<Self> {
        let t = self.physical_map();
        let mut s_p = DMatrix::zeros(self.n_dof(), dofs.len());
        for (j, &d) in dofs.iter().enumerate() {
            if d >= t.nrows() {
                return Err(Error::invalid(format!("load dof {d} out of range")));
            }
            s_p.set_column(j, &t.row(d).transpose());
        }
        self.s_p = s_p;
        Ok(self)
    }

    /// Adds a single ground-acceleration input acting uniformly on every
    /// physical dof.
    pub fn with_ground_motion(mut self) -> Result<Self> {
        if self.dof_map.is_some() {
            return Err(Error::invalid(
                "add ground motion before modal truncation so the inertia projection is exact",
            ));
        }
        self.s_g = DMatrix::from_element(self.n_dof(), 1, 1.0);
        Ok(self)
    }
}

/// Sensor placement by physical dof index (0-based).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    #[serde(default)]
    pub displacement: Vec<usize>,
    #[serde(default)]
    pub velocity: Vec<usize>,
    #[serde(default)]
    pub acceleration: Vec<usize>,
}

impl SensorLayout {
    pub fn accelerations(dofs: impl IntoIterator<Item = usize>) -> Self {
        SensorLayout {
            acceleration: dofs.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.displacement.len() + self.velocity.len() + self.acceleration.len()
    }

    pub fn validate(&self, n_physical: usize) -> Result<()> {
        for (name, block) in [
            ("displacement", &self.displacement),
            ("velocity", &self.velocity),
            ("acceleration", &self.acceleration),
        ] {
            let mut seen = vec![false; n_physical];
            for &d in block {
                if d >= n_physical {
                    return Err(Error::dim(format!(
                        "{name} sensor at dof {d} but the model has {n_physical} dofs"
                    )));
                }
                if seen[d] {
                    return Err(Error::invalid(format!("duplicate {name} sensor at dof {d}")));
                }
                seen[d] = true;
            }
        }
        if self.n_outputs() == 0 {
            return Err(Error::invalid("sensor layout has no channels"));
        }
        Ok(())
    }

    /// Channel names in output order, using 1-based dof numbers.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_outputs());
        names.extend(self.displacement.iter().map(|d| format!("disp_{}", d + 1)));
        names.extend(self.velocity.iter().map(|d| format!("vel_{}", d + 1)));
        names.extend(self.acceleration.iter().map(|d| format!("acc_{}", d + 1)));
        names
    }
}

/// Row-selection matrix picking `dofs` out of `n` entries.
pub fn selection_matrix(dofs: &[usize], n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dofs.len(), n);
    for (r, &d) in dofs.iter().enumerate() {
        s[(r, d)] = 1.0;
    }
    s
}

/// First-order model `ẋ = A_c x + B_c f`, `y = G_c x + J_c f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateSpace {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub g_c: DMatrix<f64>,
    pub j_c: DMatrix<f64>,
    pub n_loads: usize,
    pub n_ground: usize,
    /// Absolute accelerations of every physical dof, `ü_abs = acc_state x +
    /// acc_input f`; used to reconstruct unmeasured accelerations.
    pub acc_state: DMatrix<f64>,
    pub acc_input: DMatrix<f64>,
    /// `T` with physical displacement `u = T q` for the first half of the
    /// state; identity for unreduced models.
    pub dof_map: DMatrix<f64>,
}

impl ContinuousStateSpace {
    pub fn n_states(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_c.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.g_c.nrows()
    }

    pub fn n_dof(&self) -> usize {
        self.n_states() / 2
    }

    pub fn n_physical(&self) -> usize {
        self.dof_map.nrows()
    }
}

/// Undamped modal properties.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalData {
    /// Natural frequencies in Hz, ascending.
    pub frequencies: Vec<f64>,
    /// Modal damping ratios (fraction of critical).
    pub damping_ratios: Vec<f64>,
    /// Mass-normalized mode shapes as columns.
    pub mode_shapes: DMatrix<f64>,
}

/// Shear building with lumped floor masses and storey springs.
///
/// Floor `i` (0-based, ground excluded) connects to floor `i − 1` through
/// storey stiffness `k_i`; damping is Rayleigh `C = a0 M + a1 K`.
pub fn build_shear_building(
    floor_masses: &[f64],
    storey_stiffnesses: &[f64],
    rayleigh: (f64, f64),
) -> Result<StructuralSystem> {
    let n = floor_masses.len();
    if n == 0 || storey_stiffnesses.len() != n {
        return Err(Error::invalid(format!(
            "need equal, non-empty mass and stiffness lists (got {} and {})",
            n,
            storey_stiffnesses.len()
        )));
    }
    if floor_masses.iter().chain(storey_stiffnesses).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("masses and stiffnesses must be positive"));
    }
    let (a0, a1) = rayleigh;
    if !(a0 >= 0.0 && a1 >= 0.0) {
        return Err(Error::invalid("Rayleigh coefficients must be non-negative"));
    }

    let m = DMatrix::from_diagonal(&DVector::from_column_slice(floor_masses));
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] += storey_stiffnesses[i];
        if i + 1 < n {
            let above = storey_stiffnesses[i + 1];
            k[(i, i)] += above;
            k[(i, i + 1)] -= above;
            k[(i + 1, i)] -= above;
        }
    }
    let c = &m * a0 + &k * a1;
    StructuralSystem::new(m, c, k, DMatrix::zeros(n, 0), DMatrix::zeros(n, 0))
}

/// Uniform shear chain whose fundamental frequency equals `first_frequency_hz`,
/// with Rayleigh damping giving `damping_ratio` in modes `anchor_modes`
/// (0-based).
pub fn calibrated_uniform_chain(
    n: usize,
    floor_mass: f64,
    first_frequency_hz: f64,
    damping_ratio: f64,
    anchor_modes: (usize, usize),
) -> Result<StructuralSystem> {
    if n == 0 || anchor_modes.0 >= n || anchor_modes.1 >= n || anchor_modes.0 == anchor_modes.1 {
        return Err(Error::invalid("invalid chain size or anchor modes"));
    }
    // Uniform chain: ω_j = 2 √(k/m) sin((2j − 1) π / (2(2n + 1))).
    let shape = |j: usize| 2.0 * (((2 * j + 1) as f64) * PI / (2.0 * (2 * n + 1) as f64)).sin();
    let sqrt_k_over_m = 2.0 * PI * first_frequency_hz / shape(0);
    let k = floor_mass * sqrt_k_over_m * sqrt_k_over_m;
    let wi = sqrt_k_over_m * shape(anchor_modes.0);
    let wj = sqrt_k_over_m * shape(anchor_modes.1);
    // ζ = (a0/ω + a1 ω)/2 at both anchors
    let a1 = 2.0 * damping_ratio / (wi + wj);
    let a0 = a1 * wi * wj;
    build_shear_building(&vec![floor_mass; n], &vec![k; n], (a0, a1))
}

/// Solves `K φ = ω² M φ`; damping ratios are `φᵢᵀ C φᵢ / (2 ωᵢ)` for
/// mass-normalized shapes, which reduces to `(a0/ω + a1 ω)/2` for Rayleigh
/// damping.
pub fn modal_analysis(sys: &StructuralSystem) -> Result<ModalData> {
    let chol = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("mass matrix is not positive definite"))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("mass Cholesky factor is singular"))?;
    let reduced = &l_inv * &sys.k * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let n = sys.n_dof();
    let mut shapes = DMatrix::zeros(n, n);
    let mut frequencies = Vec::with_capacity(n);
    let mut damping = Vec::with_capacity(n);
    for (col, &idx) in order.iter().enumerate() {
        let w2 = eig.eigenvalues[idx];
        if !(w2 > 0.0) {
            return Err(Error::invalid(format!(
                "non-positive squared frequency {w2:e}: stiffness is singular"
            )));
        }
        let omega = w2.sqrt();
        let mut phi = l_inv.transpose() * eig.eigenvectors.column(idx);
        // sign convention: largest-magnitude component positive
        let pivot = phi.iamax();
        if phi[pivot] < 0.0 {
            phi = -phi;
        }
        let modal_c = (phi.transpose() * &sys.c * &phi)[(0, 0)];
        frequencies.push(omega / (2.0 * PI));
        damping.push(modal_c / (2.0 * omega));
        shapes.set_column(col, &phi);
    }
    Ok(ModalData {
        frequencies,
        damping_ratios: damping,
        mode_shapes: shapes,
    })
}

/// Projects the system onto its first `n_keep` mass-normalized undamped
/// modes. The returned system keeps the composite map to physical dofs so
/// estimated modal states can be expanded back.
pub fn modal_truncation(sys: &StructuralSystem, n_keep: usize) -> Result<StructuralSystem> {
    let n = sys.n_dof();
    if n_keep == 0 || n_keep > n {
        return Err(Error::invalid(format!("n_keep must be in 1..={n}, got {n_keep}")));
    }
    if n_keep == n {
        return Ok(sys.clone());
    }
    let modes = modal_analysis(sys)?;
    let phi = modes.mode_shapes.columns(0, n_keep).into_owned();
    let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;
    let m_r = sym(phi.transpose() * &sys.m * &phi);
    let k_r = sym(phi.transpose() * &sys.k * &phi);
    let c_r = sym(phi.transpose() * &sys.c * &phi);
    let s_p = phi.transpose() * &sys.s_p;
    let inertia = phi.transpose() * &sys.m * &sys.s_g;
    let s_g = m_r
        .clone()
        .lu()
        .solve(&inertia)
        .ok_or_else(|| Error::invalid("reduced mass matrix is singular"))?;
    let dof_map = Some(sys.physical_map() * &phi);
    let reduced = StructuralSystem {
        m: m_r,
        c: c_r,
        k: k_r,
        s_p,
        s_g,
        dof_map,
    };
    reduced.validate()?;
    Ok(reduced)
}

/// Builds `A_c`, `B_c`, `G_c`, `J_c` from the second-order model.
pub fn assemble_continuous_ssm(
    sys: &StructuralSystem,
    sensors: &SensorLayout,
) -> Result<ContinuousStateSpace> {
    sys.validate()?;
    sensors.validate(sys.n_physical())?;
    let n = sys.n_dof();
    let n_p = sys.n_loads();
    let n_g = sys.n_ground();
    let t = sys.physical_map();
    let n_phys = t.nrows();

    let m_chol = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("mass matrix is not positive definite"))?;
    let minv_k = m_chol.solve(&sys.k);
    let minv_c = m_chol.solve(&sys.c);
    let minv_sp = m_chol.solve(&sys.s_p);

    let mut a_c = DMatrix::zeros(2 * n, 2 * n);
    a_c.view_mut((0, n), (n, n)).fill_with_identity();
    a_c.view_mut((n, 0), (n, n)).copy_from(&(-&minv_k));
    a_c.view_mut((n, n), (n, n)).copy_from(&(-&minv_c));

    let mut b_c = DMatrix::zeros(2 * n, n_p + n_g);
    b_c.view_mut((n, 0), (n, n_p)).copy_from(&minv_sp);
    b_c.view_mut((n, n_p), (n, n_g)).copy_from(&(-&sys.s_g));

    let s_dis = selection_matrix(&sensors.displacement, n_phys) * &t;
    let s_vel = selection_matrix(&sensors.velocity, n_phys) * &t;
    let s_acc = selection_matrix(&sensors.acceleration, n_phys) * &t;
    let (nd, nv, na) = (s_dis.nrows(), s_vel.nrows(), s_acc.nrows());

    let mut g_c = DMatrix::zeros(nd + nv + na, 2 * n);
    g_c.view_mut((0, 0), (nd, n)).copy_from(&s_dis);
    g_c.view_mut((nd, n), (nv, n)).copy_from(&s_vel);
    g_c.view_mut((nd + nv, 0), (na, n)).copy_from(&(-(&s_acc * &minv_k)));
    g_c.view_mut((nd + nv, n), (na, n)).copy_from(&(-(&s_acc * &minv_c)));

    // Ground-motion columns stay zero: accelerometers read absolute motion.
    let mut j_c = DMatrix::zeros(nd + nv + na, n_p + n_g);
    j_c.view_mut((nd + nv, 0), (na, n_p)).copy_from(&(&s_acc * &minv_sp));

    let mut acc_state = DMatrix::zeros(n_phys, 2 * n);
    acc_state.view_mut((0, 0), (n_phys, n)).copy_from(&(-(&t * &minv_k)));
    acc_state.view_mut((0, n), (n_phys, n)).copy_from(&(-(&t * &minv_c)));
    let mut acc_input = DMatrix::zeros(n_phys, n_p + n_g);
    acc_input.view_mut((0, 0), (n_phys, n_p)).copy_from(&(&t * &minv_sp));

    Ok(ContinuousStateSpace {
        a_c,
        b_c,
        g_c,
        j_c,
        n_loads: n_p,
        n_ground: n_g,
        acc_state,
        acc_input,
        dof_map: t,
    })
}
