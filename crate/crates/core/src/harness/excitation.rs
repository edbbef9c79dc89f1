use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ExcitationSpec;
use crate::diagnostics::Biquad;
use crate::error::{Error, Result};
use crate::kernels::{kernel_to_ssm, KernelSpec};
use crate::numerics::{matrix_exponential, symmetrize};
use crate::series::TimeSeries;

/// Random stream used for input `j`; measurement noise uses stream 0.
pub(crate) fn input_rng(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + j as u64);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Symmetric square-root factor `L` with `L Lᵀ = P` for PSD `P`.
fn psd_factor(p: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = p.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(p.clone());
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

/// Stationary sample path of a Matérn process on the grid `k dt`.
pub fn matern_sample(spec: &KernelSpec, dt: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let real = kernel_to_ssm(spec)?;
    let fd = matrix_exponential(&real.f, dt)?;
    let qd = symmetrize(&(&real.p_inf - &fd * &real.p_inf * fd.transpose()));
    let l0 = psd_factor(&real.p_inf);
    let lq = psd_factor(&qd);
    let m = real.order();
    let mut z = &l0 * DVector::from_vec(normals(rng, m));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push((&real.h * &z)[0]);
        z = &fd * &z + &lq * DVector::from_vec(normals(rng, m));
    }
    Ok(out)
}

/// Reads a two-column (time, value) record; commas, semicolons or
/// whitespace separate fields and non-numeric lines are skipped.
pub fn read_record(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 2 {
            continue;
        }
        if let (Ok(t), Ok(v)) = (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            rows.push((t, v));
        }
    }
    if rows.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: need at least two numeric (time, value) rows",
            path.display()
        )));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Parse(format!(
            "{}: record times must increase",
            path.display()
        )));
    }
    Ok(rows)
}

/// Linear interpolation onto `k dt`; zero outside the record.
pub fn resample(record: &[(f64, f64)], dt: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        if t < record[0].0 || t > record[record.len() - 1].0 {
            out.push(0.0);
            continue;
        }
        while i + 1 < record.len() - 1 && record[i + 1].0 < t {
            i += 1;
        }
        let (t0, v0) = record[i];
        let (t1, v1) = record[i + 1];
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        out.push(v0 + w.clamp(0.0, 1.0) * (v1 - v0));
    }
    out
}

/// One input signal sampled at `k dt`, `k = 0..n`.
pub fn generate_excitation(
    spec: &ExcitationSpec,
    dt: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let t = |k: usize| k as f64 * dt;
    let positive = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Configuration(format!("{what} must be positive, got {v}")))
        }
    };
    Ok(match spec {
        ExcitationSpec::Impact { start, rise, peak } => {
            positive(*rise, "impact rise")?;
            (0..n)
                .map(|k| {
                    let s = t(k) - start;
                    if s < 0.0 || s > 2.0 * rise {
                        0.0
                    } else if s <= *rise {
                        peak * s / rise
                    } else {
                        peak * (2.0 * rise - s) / rise
                    }
                })
                .collect()
        }
        ExcitationSpec::Harmonic {
            amplitude,
            frequency_hz,
            phase,
        } => (0..n)
            .map(|k| amplitude * (2.0 * PI * frequency_hz * t(k) + phase).sin())
            .collect(),
        ExcitationSpec::WhiteNoise { sigma } => {
            if !(*sigma >= 0.0) {
                return Err(Error::Configuration("noise sigma must be non-negative".into()));
            }
            normals(rng, n).into_iter().map(|v| sigma * v).collect()
        }
        ExcitationSpec::FilteredNoise {
            sigma,
            cutoff_hz,
            mean,
        } => {
            let lp = Biquad::butterworth_lowpass(*cutoff_hz, 1.0 / dt)
                .map_err(|e| Error::Configuration(e.to_string()))?;
            let raw = lp.filter(&normals(rng, n));
            let mu = raw.iter().sum::<f64>() / n as f64;
            let sd = (raw.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 { sigma / sd } else { 0.0 };
            raw.iter().map(|v| mean + scale * (v - mu)).collect()
        }
        ExcitationSpec::Matern {
            p,
            alpha2,
            lengthscale,
        } => {
            let spec = KernelSpec::matern(*p, *alpha2, *lengthscale);
            spec.validate()?;
            matern_sample(&spec, dt, n, rng)?
        }
        ExcitationSpec::Record { path, scale } => resample(&read_record(path)?, dt, n)
            .into_iter()
            .map(|v| scale * v)
            .collect(),
        ExcitationSpec::PulseTrain {
            amplitude,
            frequency_hz,
            period,
            decay,
            start,
        } => {
            positive(*period, "pulse period")?;
            positive(*decay, "pulse decay")?;
            (0..n)
                .map(|k| {
                    let mut v = 0.0;
                    let mut onset = *start;
                    while onset <= t(k) {
                        let s = t(k) - onset;
                        v += amplitude * (-s / decay).exp() * (2.0 * PI * frequency_hz * s).sin();
                        onset += period;
                    }
                    v
                })
                .collect()
        }
        ExcitationSpec::Zero => vec![0.0; n],
    })
}

/// All inputs of a scenario as one series.
pub fn generate_excitations(
    specs: &[ExcitationSpec],
    names: &[String],
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<TimeSeries> {
    let mut values = DMatrix::zeros(n, specs.len());
    for (j, spec) in specs.iter().enumerate() {
        let mut rng = input_rng(seed, j);
        let col = generate_excitation(spec, dt, n, &mut rng)?;
        values.column_mut(j).copy_from_slice(&col);
    }
    TimeSeries::new(dt, 0.0, names.to_vec(), values)
}
