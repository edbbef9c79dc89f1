//! Acceptance suite. Runs every criterion in sequence (wall-clock budgets
//! are measured per criterion) and prints one PASS/FAIL line for each.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use gplfm::baselines::{akf_model, BaselineConfig};
use gplfm::harness::{model_diagnostics, run_config, Config, Verb};
use gplfm::harness::config::Method;
use gplfm::kernels::{gp_regress, kernel_from_ssm, kernel_to_ssm, matern_eval, KernelRealization, KernelSpec};
use gplfm::lfm::{assemble_augmented, kalman_filter, rts_smoother, DiscreteModel, Prior};
use gplfm::numerics::discrete_process_noise;
use gplfm::structural::{
    assemble_continuous_ssm, build_shear_building, modal_analysis, ContinuousStateSpace, SensorLayout,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Config {
    Config::load(&configs_dir().join(name)).expect("shipped config loads")
}

// ---------------------------------------------------------------- oracles

/// exp(A) by Taylor series with scaling and squaring.
fn expm_series(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.abs().max() <= 1e-20 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Adaptive Simpson quadrature of a matrix-valued integrand.
fn simpson<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64, tol: f64) -> DMatrix<f64> {
    fn rec<F: Fn(f64) -> DMatrix<f64>>(
        f: &F,
        a: f64,
        b: f64,
        fa: &DMatrix<f64>,
        fm: &DMatrix<f64>,
        fb: &DMatrix<f64>,
        whole: &DMatrix<f64>,
        tol: f64,
        depth: u32,
    ) -> DMatrix<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
        let both = &left + &right;
        let err = (&both - whole).abs().max();
        if depth == 0 || err <= 15.0 * tol {
            return &both + (&both - whole) / 15.0;
        }
        rec(f, a, m, fa, &flm, fm, &left, tol, depth - 1)
            + rec(f, m, b, fm, &frm, fb, &right, tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
    rec(f, a, b, &fa, &fm, &fb, &whole, tol, 14)
}

// ---------------------------------------------------------------- fixtures

fn building(loads: &[usize], sensors: SensorLayout) -> ContinuousStateSpace {
    let sys = build_shear_building(&[200.0; 10], &[5e5; 10], (0.1, 0.0005))
        .unwrap()
        .with_loads(loads)
        .unwrap();
    assemble_continuous_ssm(&sys, &sensors).unwrap()
}

fn all_accelerations() -> SensorLayout {
    SensorLayout::accelerations(0..10)
}

fn noise(n: usize, v: f64) -> DMatrix<f64> {
    DMatrix::identity(n, n) * v
}

fn json_f64(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for p in path {
        cur = &cur[*p];
    }
    cur.as_f64().unwrap_or_else(|| panic!("{path:?} is not a number: {cur}"))
}

// ---------------------------------------------------------------- criteria

fn c1_modal_table() -> Outcome {
    let clock = Instant::now();
    let sys = build_shear_building(&[200.0; 10], &[5e5; 10], (0.1, 0.0005)).unwrap();
    let modal = modal_analysis(&sys).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let freq = [1.19, 3.54, 5.81, 7.96, 9.92, 11.67, 13.15, 14.34, 15.21, 15.74];
    let zeta = [0.86, 0.78, 1.05, 1.35, 1.64, 1.90, 2.13, 2.31, 2.44, 2.52];
    let df = modal
        .frequencies
        .iter()
        .zip(freq)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dz = modal
        .damping_ratios
        .iter()
        .zip(zeta)
        .map(|(a, b)| (100.0 * a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        df <= 0.01 && dz <= 0.01 && elapsed < 1.0,
        format!("max |Δf| = {df:.4} Hz, max |Δζ| = {dz:.4} %, {elapsed:.3} s"),
    )
}

fn c2_kernel_equivalence() -> Outcome {
    let clock = Instant::now();
    let mut worst = 0.0f64;
    for p in 0..3 {
        for &a2 in &[0.1, 1.0, 10.0] {
            for &l in &[0.1, 1.0, 5.0] {
                let spec = KernelSpec::matern(p, a2, l);
                let real = kernel_to_ssm(&spec).unwrap();
                for i in 0..=500 {
                    let tau = 5.0 * l * i as f64 / 500.0;
                    let d = (kernel_from_ssm(&real, tau).unwrap() - matern_eval(&spec, tau)).abs();
                    worst = worst.max(d);
                }
            }
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && elapsed < 5.0,
        format!("max deviation {worst:.2e}, {elapsed:.3} s"),
    )
}

fn c3_sequential_equals_batch() -> Outcome {
    let clock = Instant::now();
    let n = 50;
    let dt = 0.1;
    let noise_var: f64 = 0.04;
    let times: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = times
        .iter()
        .map(|t| (1.3 * t).sin() + 0.4 * (3.1 * t).cos() + noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut worst = 0.0f64;
    for p in 0..3 {
        let spec = KernelSpec::matern(p, 0.8, 0.7);
        let real = kernel_to_ssm(&spec).unwrap();
        let phi = expm_series(&(&real.f * dt));
        let q = &real.p_inf - &phi * &real.p_inf * phi.transpose();
        let m = real.order();
        let model = DiscreteModel::from_matrices(
            phi,
            real.h.clone(),
            q,
            DMatrix::from_element(1, 1, noise_var),
            DVector::zeros(m),
            real.p_inf.clone(),
            dt,
        )
        .unwrap();
        let obs = DMatrix::from_column_slice(n, 1, &y);
        let run = kalman_filter(&model, &obs).unwrap();
        let smoothed = rts_smoother(&model, &run).unwrap();
        let batch = gp_regress(&times, &y, &spec, noise_var, &times).unwrap();
        for (k, b) in smoothed.iter().enumerate() {
            let mean = (&real.h * &b.mean)[0];
            let var = (&real.h * &b.cov * real.h.transpose())[(0, 0)];
            worst = worst
                .max((mean - batch.mean[k]).abs())
                .max((var - batch.variance[k]).abs());
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && elapsed < 5.0,
        format!("max |Δ| over mean and variance {worst:.2e}, {elapsed:.3} s"),
    )
}

fn c4_process_noise_quadrature() -> Outcome {
    let ssm = building(&[9], all_accelerations());
    let dt = 0.01;
    let mut worst = 0.0f64;
    for p in [0, 2] {
        let real = kernel_to_ssm(&KernelSpec::matern(p, 1e6, 0.1)).unwrap();
        let model = assemble_augmented(&ssm, &[real], &noise(20, 0.0), &noise(10, 0.1), &Prior::isotropic(20, 1e-10))
            .unwrap();
        let mfd = discrete_process_noise(&model.f_ac, &model.q_c, dt).unwrap();
        let integrand = |t: f64| {
            let phi = expm_series(&(&model.f_ac * t));
            &phi * &model.q_c * phi.transpose()
        };
        let scale = model.q_c.abs().max() * dt;
        let quad = simpson(&integrand, 0.0, dt, 1e-13 * scale);
        let rel = (&mfd - &quad).abs().max() / quad.abs().max();
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-8, format!("max relative deviation {worst:.2e} (p = 0, 2)"))
}

fn c5_akf_special_case() -> Outcome {
    let ssm = building(&[9], all_accelerations());
    let q_x = noise(20, 1e-10);
    let r = noise(10, 0.1);
    let prior = Prior::isotropic(20, 1e-10);
    let p_f0 = 1e6;
    let gplfm = assemble_augmented(&ssm, &[KernelRealization::random_walk(0.0, p_f0)], &q_x, &r, &prior).unwrap();
    let mut cfg = BaselineConfig::isotropic(1, 0.0);
    cfg.p_f0 = Some(noise(1, p_f0));
    let akf = akf_model(&ssm, &cfg, &q_x, &r, &prior).unwrap();
    let same_structure = gplfm.f_ac == akf.f_ac && gplfm.h_ac == akf.h_ac;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = DMatrix::from_fn(200, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = kalman_filter(&gplfm.discretize(0.01).unwrap(), &y).unwrap();
    let b = kalman_filter(&akf.discretize(0.01).unwrap(), &y).unwrap();
    let diff = a
        .filtered
        .iter()
        .zip(&b.filtered)
        .map(|(x, z)| (&x.mean - &z.mean).abs().max())
        .fold(0.0, f64::max);
    outcome(
        same_structure && diff <= 1e-10,
        format!("F_ac, H_ac identical: {same_structure}; max filtered-mean difference {diff:.2e} over 200 steps"),
    )
}

fn c6_detectability() -> Outcome {
    let ssm = building(&[9], all_accelerations());
    let (q_x, r, prior) = (noise(20, 1e-10), noise(10, 0.1), Prior::isotropic(20, 1e-10));
    let real = kernel_to_ssm(&KernelSpec::matern(0, 1e6, 0.1)).unwrap();
    let g = model_diagnostics(&assemble_augmented(&ssm, &[real], &q_x, &r, &prior).unwrap()).unwrap();
    let a = model_diagnostics(&akf_model(&ssm, &BaselineConfig::isotropic(1, 1e4), &q_x, &r, &prior).unwrap()).unwrap();
    let at_zero = a
        .undetectable_modes
        .iter()
        .any(|m| m.eigenvalue_re.abs() < 1e-8 && m.eigenvalue_im.abs() < 1e-8);
    outcome(
        g.detectable && !a.detectable && at_zero,
        format!(
            "GPLFM detectable: {}; AKF undetectable modes: {} (at s = 0: {at_zero})",
            g.detectable,
            a.undetectable_modes.len()
        ),
    )
}

fn c7_transmission_zero_rank() -> Outcome {
    let ssm = building(&[9], all_accelerations());
    let (q_x, r, prior) = (noise(20, 1e-10), noise(10, 0.1), Prior::isotropic(20, 1e-10));
    let mut ranks = Vec::new();
    let mut ok = true;
    for p in 0..3 {
        let real = kernel_to_ssm(&KernelSpec::matern(p, 1e6, 0.1)).unwrap();
        let m = real.order();
        let d = model_diagnostics(&assemble_augmented(&ssm, &[real], &q_x, &r, &prior).unwrap()).unwrap();
        ok &= d.zero_rank == 20 + m;
        ranks.push(format!("p={p}: {}/{}", d.zero_rank, 20 + m));
    }
    let a = model_diagnostics(&akf_model(&ssm, &BaselineConfig::isotropic(1, 1e4), &q_x, &r, &prior).unwrap()).unwrap();
    ok &= a.zero_rank < a.zero_rank_full;
    outcome(
        ok,
        format!("GPLFM {}; AKF {}/{}", ranks.join(", "), a.zero_rank, a.zero_rank_full),
    )
}

fn c8_drift_separation() -> Outcome {
    let cfg = load("random_all_acc.toml");
    let clock = Instant::now();
    let g = run_config(&cfg, Verb::Estimate, None).unwrap().summary().unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let mut akf_cfg = cfg.clone();
    akf_cfg.estimation.method = Method::Akf;
    let a = run_config(&akf_cfg, Verb::Estimate, None).unwrap().summary().unwrap();
    let dg = json_f64(&g, &["metrics", "displacement", "disp_5", "drift"]);
    let da = json_f64(&a, &["metrics", "displacement", "disp_5", "drift"]);
    let corr = json_f64(&g, &["metrics", "force", "force_10", "correlation"]);
    outcome(
        da >= 10.0 * dg && corr >= 0.9 && elapsed < 60.0,
        format!(
            "drift GPLFM {dg:.4} vs AKF {da:.4} (ratio {:.1}), force correlation {corr:.3}, GPLFM run {elapsed:.1} s",
            da / dg
        ),
    )
}

fn c9_seismic_feedthrough() -> Outcome {
    let mut cfg = load("seismic_pulse.toml");
    let scen = cfg.scenario().unwrap();
    let ssm = assemble_continuous_ssm(&scen.model_system, &scen.sensors).unwrap();
    let j_zero = ssm.j_c.iter().all(|v| *v == 0.0);
    cfg.estimation.method = Method::Dkf;
    let err = run_config(&cfg, Verb::Estimate, None).err();
    let degenerate = matches!(err.as_ref().map(|e| e.root()), Some(gplfm::Error::Degeneracy(_)));
    let code = err.as_ref().map(|e| e.exit_code());
    outcome(
        j_zero && degenerate && code == Some(4),
        format!("J_c exactly zero: {j_zero}; DKF error: {err:?}"),
    )
}

fn c10_lengthscale_recovery() -> Outcome {
    let true_l = 0.5;
    let text = format!(
        r#"
seed = 10
[model]
kind = "shear"
floors = 10
mass = 200.0
stiffness = 5.0e5
rayleigh = [0.1, 0.0005]

[[inputs]]
kind = "load"
floor = 10
excitation = {{ type = "matern", p = 0, alpha2 = 1.0e6, lengthscale = {true_l} }}

[sensors]
acceleration = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]

[simulation]
sample_rate_hz = 100.0
duration_s = 50.0

[estimation]
kernel = {{ p = 0, alpha2 = "optimize", lengthscale = "optimize" }}

[optimization]
n_starts = 4
"#
    );
    let cfg = Config::from_toml_str(&text).unwrap();
    let clock = Instant::now();
    let s = run_config(&cfg, Verb::Optimize, None).unwrap().summary().unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let opt = &s["optimization"];
    let log_l = opt["best"]["kernels"][0]["log_lengthscale"].as_f64().unwrap();
    let best = opt["best_nll"].as_f64().unwrap();
    let initial: Vec<f64> = opt["starts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|st| st["initial_nll"].as_f64().unwrap_or(f64::INFINITY))
        .collect();
    let ratio = log_l.exp() / true_l;
    let below_all = initial.iter().all(|v| best <= *v);
    outcome(
        (0.5..=2.0).contains(&ratio) && below_all && elapsed < 120.0 && s["scenario"]["n_steps"] == 5000,
        format!(
            "lengthscale {:.3} s (true {true_l}), best NLL {best:.1} <= all {} initial: {below_all}, {elapsed:.1} s",
            log_l.exp(),
            initial.len()
        ),
    )
}

fn c11_lcurve_corner() -> Outcome {
    let cfg = load("impact_all_acc.toml");
    let s = run_config(&cfg, Verb::Lcurve, None).unwrap().summary().unwrap();
    let q = json_f64(&s, &["lcurve", "corner_q_f"]);
    outcome((q.log10() - 4.0).abs() <= 1.0, format!("corner Q_f = {q:e}"))
}

fn c12_determinism() -> Outcome {
    let cfg = load("impact_all_acc.toml");
    let a = run_config(&cfg, Verb::Estimate, Some(7)).unwrap();
    let b = run_config(&cfg, Verb::Estimate, Some(7)).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    a.write_to(dirs[0].path()).unwrap();
    b.write_to(dirs[1].path()).unwrap();
    let mut identical = a == b;
    for name in a.files.keys() {
        let x = std::fs::read(dirs[0].path().join(name)).unwrap();
        let y = std::fs::read(dirs[1].path().join(name)).unwrap();
        identical &= x == y;
    }
    outcome(identical, format!("{} files compared byte for byte", a.files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("modal reproduction", c1_modal_table),
        ("kernel/SSM equivalence", c2_kernel_equivalence),
        ("sequential = batch GP regression", c3_sequential_equals_batch),
        ("discretization oracle", c4_process_noise_quadrature),
        ("AKF as degenerate GPLFM", c5_akf_special_case),
        ("detectability", c6_detectability),
        ("transmission-zero rank", c7_transmission_zero_rank),
        ("drift separation", c8_drift_separation),
        ("seismic feedthrough", c9_seismic_feedthrough),
        ("hyperparameter optimization", c10_lengthscale_recovery),
        ("L-curve corner", c11_lcurve_corner),
        ("determinism", c12_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut ran, mut failed) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let clock = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.2} s total)",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
