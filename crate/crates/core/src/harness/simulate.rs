use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::rms;
use crate::error::{Error, Result};
use crate::numerics::{discretize_zoh, spectral_abscissa};
use crate::series::TimeSeries;
use crate::structural::{assemble_continuous_ssm, ContinuousStateSpace, SensorLayout, StructuralSystem};

/// Noise-free responses at every physical dof.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub displacement: TimeSeries,
    pub velocity: TimeSeries,
    /// Absolute accelerations.
    pub acceleration: TimeSeries,
    pub clean_measurements: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub excitation: TimeSeries,
    pub measurements: TimeSeries,
    pub truth: Truth,
    /// Noise standard deviation per measurement channel.
    pub noise_std: Vec<f64>,
}

/// States `x_k` (rows) of `x_{k+1} = A x_k + B f_k` from `x_0 = 0`, with the
/// input held constant over each sample.
pub fn propagate(ssm: &ContinuousStateSpace, dt: f64, forces: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if forces.ncols() != ssm.n_inputs() {
        return Err(Error::dim(format!(
            "{} input columns for a model with {} inputs",
            forces.ncols(),
            ssm.n_inputs()
        )));
    }
    let abscissa = spectral_abscissa(&ssm.a_c);
    if abscissa > 1e-10 * ssm.a_c.abs().max() {
        return Err(Error::Stability(format!(
            "structural model has an eigenvalue with real part {abscissa:e}"
        )));
    }
    let (a, b) = discretize_zoh(&ssm.a_c, &ssm.b_c, dt)?;
    let n = forces.nrows();
    let mut states = DMatrix::zeros(n, ssm.n_states());
    let mut x = DVector::zeros(ssm.n_states());
    for k in 0..n {
        states.row_mut(k).copy_from(&x.transpose());
        let f = forces.row(k).transpose();
        x = &a * &x + &b * f;
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::Stability("simulated response is not finite".into()));
    }
    Ok(states)
}

fn physical_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|d| format!("{prefix}_{d}")).collect()
}

/// Simulates the truth and adds white measurement noise with standard
/// deviation `noise_fraction × RMS` of each clean channel.
pub fn simulate_response(
    sys: &StructuralSystem,
    excitation: &TimeSeries,
    sensors: &SensorLayout,
    noise_fraction: f64,
    seed: u64,
) -> Result<Simulation> {
    let ssm = assemble_continuous_ssm(sys, sensors)?;
    let dt = excitation.dt;
    let f = &excitation.values;
    let x = propagate(&ssm, dt, f)?;
    let n = ssm.n_dof();
    let n_phys = ssm.n_physical();

    let disp = x.columns(0, n) * ssm.dof_map.transpose();
    let vel = x.columns(n, n) * ssm.dof_map.transpose();
    let acc = &x * ssm.acc_state.transpose() + f * ssm.acc_input.transpose();
    let clean = &x * ssm.g_c.transpose() + f * ssm.j_c.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut noisy = clean.clone();
    let mut noise_std = Vec::with_capacity(clean.ncols());
    for (j, mut col) in noisy.column_iter_mut().enumerate() {
        let sd = noise_fraction * rms(clean.column(j).as_slice());
        noise_std.push(sd);
        for v in col.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let ts = |names: Vec<String>, values: DMatrix<f64>| TimeSeries::new(dt, excitation.t0, names, values);
    let channels = sensors.channel_names();
    Ok(Simulation {
        excitation: excitation.clone(),
        measurements: ts(channels.clone(), noisy)?,
        truth: Truth {
            displacement: ts(physical_names("disp", n_phys), disp)?,
            velocity: ts(physical_names("vel", n_phys), vel)?,
            acceleration: ts(physical_names("acc", n_phys), acc)?,
            clean_measurements: ts(channels, clean)?,
        },
        noise_std,
    })
}
