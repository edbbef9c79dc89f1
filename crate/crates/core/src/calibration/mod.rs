//! Maximum-likelihood kernel hyperparameters: innovations negative
//! log-likelihood and multistart Nelder–Mead in log space.

mod halton;
mod nelder_mead;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use halton::{radical_inverse, shifted_halton};
pub use nelder_mead::{nelder_mead, SimplexOptions, SimplexResult};

use crate::error::{Error, Result};
use crate::kernels::{kernel_to_ssm, KernelSpec};
use crate::lfm::{assemble_augmented, negative_log_likelihood, Prior};
use crate::structural::ContinuousStateSpace;

/// Log-space hyperparameters of one Matérn kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub p: u32,
    pub log_alpha2: f64,
    pub log_lengthscale: f64,
    #[serde(default)]
    pub fix_alpha2: bool,
    #[serde(default)]
    pub fix_lengthscale: bool,
}

impl KernelHyper {
    pub fn from_spec(spec: &KernelSpec) -> Self {
        KernelHyper {
            p: spec.p,
            log_alpha2: spec.alpha2.ln(),
            log_lengthscale: spec.lengthscale.ln(),
            fix_alpha2: false,
            fix_lengthscale: false,
        }
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec::matern(self.p, self.log_alpha2.exp(), self.log_lengthscale.exp())
    }
}

/// Hyperparameters of every kernel. A single entry is shared by all inputs;
/// otherwise there is one entry per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kernels: Vec<KernelHyper>,
}

impl HyperParams {
    pub fn shared(kernel: KernelHyper) -> Self {
        HyperParams { kernels: vec![kernel] }
    }

    fn free_slots(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.kernels.iter().enumerate().flat_map(|(i, k)| {
            [(!k.fix_alpha2).then_some((i, true)), (!k.fix_lengthscale).then_some((i, false))]
                .into_iter()
                .flatten()
        })
    }

    pub fn n_free(&self) -> usize {
        self.free_slots().count()
    }

    /// Names of the free parameters in vector order.
    pub fn free_names(&self) -> Vec<String> {
        self.free_slots()
            .map(|(i, a)| format!("{}[{i}]", if a { "log_alpha2" } else { "log_lengthscale" }))
            .collect()
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.free_slots()
            .map(|(i, a)| {
                let k = &self.kernels[i];
                if a {
                    k.log_alpha2
                } else {
                    k.log_lengthscale
                }
            })
            .collect()
    }

    pub fn with_free(&self, theta: &[f64]) -> Self {
        let slots: Vec<_> = self.free_slots().collect();
        assert_eq!(slots.len(), theta.len(), "free parameter count");
        let mut out = self.clone();
        for ((i, a), v) in slots.into_iter().zip(theta) {
            if a {
                out.kernels[i].log_alpha2 = *v;
            } else {
                out.kernels[i].log_lengthscale = *v;
            }
        }
        out
    }

    /// Kernel specs for `n_inputs` input columns.
    pub fn specs(&self, n_inputs: usize) -> Result<Vec<KernelSpec>> {
        match self.kernels.len() {
            1 => Ok(vec![self.kernels[0].spec(); n_inputs]),
            n if n == n_inputs => Ok(self.kernels.iter().map(KernelHyper::spec).collect()),
            n => Err(Error::Configuration(format!(
                "{n} kernels configured for {n_inputs} inputs"
            ))),
        }
    }
}

/// Data and fixed model pieces for likelihood evaluation.
#[derive(Debug, Clone)]
pub struct NllProblem<'a> {
    pub ssm: &'a ContinuousStateSpace,
    pub dt: f64,
    pub y: &'a DMatrix<f64>,
    pub q_x: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub prior: &'a Prior,
}

impl NllProblem<'_> {
    /// Mean per-channel variance of the observed samples.
    pub fn measurement_variance(&self) -> f64 {
        let mut total = 0.0;
        let mut channels = 0;
        for col in self.y.column_iter() {
            let v: Vec<f64> = col.iter().copied().filter(|x| !x.is_nan()).collect();
            if v.len() < 2 {
                continue;
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            total += v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
            channels += 1;
        }
        if channels == 0 {
            1.0
        } else {
            total / channels as f64
        }
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.y.nrows() as f64
    }
}

/// Innovations NLL for `params`. Numerical failures (non-Hurwitz kernel,
/// singular innovation covariance) give `+∞`; configuration problems are
/// errors.
pub fn nll(params: &HyperParams, problem: &NllProblem<'_>) -> Result<f64> {
    let specs = params.specs(problem.ssm.n_inputs())?;
    let mut kernels = Vec::with_capacity(specs.len());
    for s in &specs {
        match kernel_to_ssm(s) {
            Ok(k) => kernels.push(k),
            Err(e) if e.exit_code() == 3 => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    let model = assemble_augmented(problem.ssm, &kernels, problem.q_x, problem.r, problem.prior)?;
    let outcome = model
        .discretize(problem.dt)
        .and_then(|d| negative_log_likelihood(&d, problem.y));
    match outcome {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Ok(f64::INFINITY),
        Err(e) if e.exit_code() == 3 => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Default log-space box: `log α² ∈ [log 1e-4 s², log 1e6 s²]` with `s²` the
/// measurement variance, `log l ∈ [log dt, log T]`.
pub fn default_bounds(params: &HyperParams, problem: &NllProblem<'_>) -> Vec<(f64, f64)> {
    let s2 = problem.measurement_variance().max(f64::MIN_POSITIVE);
    let alpha = ((1e-4 * s2).ln(), (1e6 * s2).ln());
    let length = (problem.dt.ln(), problem.duration().max(problem.dt * 2.0).ln());
    params
        .free_slots()
        .map(|(_, a)| if a { alpha } else { length })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub n_starts: usize,
    /// Log-space box per free parameter; `default_bounds` when absent.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub simplex: SimplexOptions,
    pub seed: u64,
    /// Use the template's own values as the first start.
    pub start_from_template: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            n_starts: 8,
            bounds: None,
            simplex: SimplexOptions::default(),
            seed: 0,
            start_from_template: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    pub index: usize,
    pub start: Vec<f64>,
    pub initial_nll: f64,
    pub params: Vec<f64>,
    pub nll: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trajectory: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub parameter_names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub best: HyperParams,
    pub best_nll: f64,
    pub best_start: usize,
    pub starts: Vec<StartReport>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Multistart Nelder–Mead over the free log-parameters of `template`.
pub fn optimize(
    problem: &NllProblem<'_>,
    template: &HyperParams,
    opts: &OptimizeOptions,
) -> Result<OptimizationReport> {
    let clock = Instant::now();
    if opts.n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    let dim = template.n_free();
    let bounds = match &opts.bounds {
        Some(b) => b.clone(),
        None => default_bounds(template, problem),
    };
    if bounds.len() != dim {
        return Err(Error::Configuration(format!(
            "{} bounds given for {dim} free parameters",
            bounds.len()
        )));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::invalid("bounds must be finite with lower <= upper"));
    }
    // surface configuration errors before spawning the search
    nll(template, problem)?;

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.n_starts);
    if opts.start_from_template {
        starts.push(template.free_values());
    }
    let n_halton = opts.n_starts - starts.len();
    for u in shifted_halton(n_halton, dim, opts.seed) {
        starts.push(
            u.iter()
                .zip(&bounds)
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect(),
        );
    }
    if dim == 0 {
        starts.truncate(1);
    }

    let runs: Vec<StartReport> = starts
        .par_iter()
        .enumerate()
        .map(|(index, x0)| {
            let mut failure: Option<String> = None;
            let mut objective = |theta: &[f64]| match nll(&template.with_free(theta), problem) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert_with(|| e.to_string());
                    f64::INFINITY
                }
            };
            let mut clipped = x0.clone();
            for (v, (lo, hi)) in clipped.iter_mut().zip(&bounds) {
                *v = v.clamp(*lo, *hi);
            }
            let initial_nll = objective(&clipped);
            let r = nelder_mead(&mut objective, &clipped, &bounds, &opts.simplex);
            StartReport {
                index,
                start: clipped,
                initial_nll,
                params: r.x,
                nll: r.value,
                iterations: r.iterations,
                evaluations: r.evaluations + 1,
                converged: r.converged,
                trajectory: r.trajectory,
                error: failure,
            }
        })
        .collect();

    let best = runs
        .iter()
        .filter(|s| s.nll.is_finite())
        .min_by(|a, b| a.nll.total_cmp(&b.nll).then(a.index.cmp(&b.index)))
        .ok_or_else(|| {
            let detail: Vec<String> = runs
                .iter()
                .map(|s| {
                    format!(
                        "start {}: {}",
                        s.index,
                        s.error.as_deref().unwrap_or("non-finite likelihood")
                    )
                })
                .collect();
            Error::Optimization(format!("all starts failed ({})", detail.join("; ")))
        })?;
    debug_assert!(runs.iter().all(|s| best.nll <= s.initial_nll));
    let (best_params, best_nll, best_start) = (best.params.clone(), best.nll, best.index);
    Ok(OptimizationReport {
        parameter_names: template.free_names(),
        bounds,
        best: template.with_free(&best_params),
        best_nll,
        best_start,
        starts: runs,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{assemble_continuous_ssm, build_shear_building, SensorLayout};

    #[test]
    fn free_vector_round_trip() {
        let mut k = KernelHyper::from_spec(&KernelSpec::matern(1, 2.0, 0.5));
        k.fix_alpha2 = true;
        let p = HyperParams {
            kernels: vec![k.clone(), KernelHyper::from_spec(&KernelSpec::matern(0, 3.0, 1.5))],
        };
        assert_eq!(p.n_free(), 3);
        assert_eq!(
            p.free_names(),
            vec!["log_lengthscale[0]", "log_alpha2[1]", "log_lengthscale[1]"]
        );
        let q = p.with_free(&[0.0, 1.0, 2.0]);
        assert_eq!(q.kernels[0].log_alpha2, 2.0f64.ln());
        assert_eq!(q.kernels[0].log_lengthscale, 0.0);
        assert_eq!(q.free_values(), vec![0.0, 1.0, 2.0]);
        assert!(p.specs(3).is_err());
        assert_eq!(HyperParams::shared(k.clone()).specs(3).unwrap().len(), 3);
    }

    #[test]
    fn nll_is_pure_and_finite_on_grid() {
        let s = build_shear_building(&[1.0], &[40.0], (0.2, 0.0))
            .unwrap()
            .with_loads(&[0])
            .unwrap();
        let ssm = assemble_continuous_ssm(&s, &SensorLayout::accelerations([0])).unwrap();
        let y = DMatrix::from_fn(200, 1, |k, _| ((k * 37 % 101) as f64 / 50.0) - 1.0);
        let (q_x, r, prior) = (
            DMatrix::identity(2, 2) * 1e-10,
            DMatrix::identity(1, 1) * 0.1,
            Prior::isotropic(2, 1e-10),
        );
        let problem = NllProblem { ssm: &ssm, dt: 0.01, y: &y, q_x: &q_x, r: &r, prior: &prior };
        let base = HyperParams::shared(KernelHyper::from_spec(&KernelSpec::matern(0, 1.0, 0.1)));
        let a = nll(&base, &problem).unwrap();
        assert_eq!(a, nll(&base, &problem).unwrap());
        for la in [-4.0, -2.0, 0.0, 2.0, 4.0] {
            for ll in [-4.0, -2.0, 0.0, 1.0, 2.0] {
                let v = nll(&base.with_free(&[la, ll]), &problem).unwrap();
                assert!(v.is_finite());
            }
        }
    }
}
