use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::config::{Config, KernelConfig, Method, OptimizationConfig, Scenario, SCHEMA_VERSION};
use super::excitation::generate_excitations;
use super::io::{json_pretty, read_series_csv, series_csv, table_csv};
use super::simulate::{simulate_response, Simulation};
use crate::baselines::{akf_model, l_curve, run_baseline, BaselineConfig, BaselineMethod, BaselineProblem};
use crate::calibration::{default_bounds, optimize, HyperParams, KernelHyper, NllProblem, OptimizationReport, OptimizeOptions};
use crate::diagnostics::{detectability_check, signal_metrics, ModeCheck, SignalMetrics};
use crate::error::{Error, Result};
use crate::kernels::kernel_to_ssm;
use crate::lfm::{assemble_augmented, estimate, AugmentedModel, EstimationResult, Prior, SignalEstimate};
use crate::calibration::SimplexOptions;
use crate::diagnostics::transmission_zero_rank;
use crate::series::TimeSeries;
use crate::structural::{assemble_continuous_ssm, modal_analysis, ContinuousStateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Simulate,
    Estimate,
    Optimize,
    Lcurve,
    Diagnose,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Simulate => "simulate",
            Verb::Estimate => "estimate",
            Verb::Optimize => "optimize",
            Verb::Lcurve => "lcurve",
            Verb::Diagnose => "diagnose",
        }
    }
}

/// Output files of one run, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bundle {
    pub files: BTreeMap<String, String>,
}

impl Bundle {
    fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.insert(name.into(), content);
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error, p: &Path| Error::Io {
            path: p.display().to_string(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| io(e, &path))?;
        }
        Ok(())
    }

    /// Parsed `summary.json`.
    pub fn summary(&self) -> Result<Value> {
        let text = self
            .files
            .get("summary.json")
            .ok_or_else(|| Error::Parse("bundle has no summary.json".into()))?;
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("json: {e}")))
    }
}

/// Compact observability report for one augmented model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDiagnostics {
    pub n_augmented: usize,
    pub detectable: bool,
    pub undetectable_modes: Vec<ModeCheck>,
    /// Rank of `[F_ac; H_ac]`, i.e. of the transmission-zero pencil at `s = 0`.
    pub zero_rank: usize,
    pub zero_rank_full: usize,
}

pub fn model_diagnostics(model: &AugmentedModel) -> Result<ModelDiagnostics> {
    let det = detectability_check(model)?;
    let rank = transmission_zero_rank(model, Complex64::new(0.0, 0.0));
    Ok(ModelDiagnostics {
        n_augmented: model.n_augmented(),
        detectable: det.detectable,
        undetectable_modes: det.undetectable,
        zero_rank: rank.rank,
        zero_rank_full: rank.full_rank,
    })
}

/// Loads a config file and runs one verb.
pub fn run_experiment(config_path: &Path, verb: Verb, seed: Option<u64>) -> Result<Bundle> {
    let cfg = Config::load(config_path).map_err(|e| e.in_stage("config"))?;
    run_config(&cfg, verb, seed)
}

/// Runs one verb; `seed` overrides the seed in the config (default 0).
pub fn run_config(cfg: &Config, verb: Verb, seed: Option<u64>) -> Result<Bundle> {
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let scen = cfg.scenario().map_err(|e| e.in_stage("config"))?;
    let mut run = Run {
        cfg,
        scen: &scen,
        seed,
        bundle: Bundle::default(),
        summary: Map::new(),
    };
    run.summary.insert("schema_version".into(), json!(SCHEMA_VERSION));
    run.summary.insert("package_version".into(), json!(env!("CARGO_PKG_VERSION")));
    run.summary.insert("verb".into(), json!(verb.name()));
    run.summary.insert("seed".into(), json!(seed));
    run.summary.insert("config".into(), to_value(cfg)?);
    run.scenario_info()?;
    match verb {
        Verb::Simulate => {
            run.data()?;
        }
        Verb::Estimate => run.estimate()?,
        Verb::Optimize => run.optimize_only()?,
        Verb::Lcurve => run.lcurve()?,
        Verb::Diagnose => run.diagnose()?,
    }
    let Run { mut bundle, summary, .. } = run;
    bundle.add("summary.json", json_pretty(&Value::Object(summary))?);
    Ok(bundle)
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Parse(format!("json: {e}")))
}

struct Data {
    measurements: TimeSeries,
    sim: Option<Simulation>,
}

struct Setup {
    ssm: ContinuousStateSpace,
    q_x: DMatrix<f64>,
    r: DMatrix<f64>,
    prior: Prior,
}

struct Run<'a> {
    cfg: &'a Config,
    scen: &'a Scenario,
    seed: u64,
    bundle: Bundle,
    summary: Map<String, Value>,
}

impl Run<'_> {
    fn scenario_info(&mut self) -> Result<()> {
        let s = self.scen;
        let modal = modal_analysis(&s.model_system).map_err(|e| e.in_stage("config"))?;
        self.summary.insert(
            "scenario".into(),
            json!({
                "n_physical": s.truth_system.n_physical(),
                "n_model_coordinates": s.model_system.n_dof(),
                "inputs": s.input_names,
                "channels": s.sensors.channel_names(),
                "dt": s.dt,
                "n_steps": s.n_steps,
                "frequencies_hz": modal.frequencies,
                "damping_ratios": modal.damping_ratios,
            }),
        );
        Ok(())
    }

    /// Simulated or loaded measurements; simulated runs also write the
    /// excitation and truth.
    fn data(&mut self) -> Result<Data> {
        let s = self.scen;
        if let Some(d) = &self.cfg.data {
            let y = read_series_csv(&d.measurements).map_err(|e| e.in_stage("data"))?;
            let expected = s.sensors.n_outputs();
            if y.n_channels() != expected {
                return Err(Error::Configuration(format!(
                    "measurement file has {} channels, sensors define {expected}",
                    y.n_channels()
                ))
                .in_stage("data"));
            }
            if ((y.dt - s.dt) / s.dt).abs() > 1e-6 {
                return Err(Error::Configuration(format!(
                    "measurement file is sampled at {} s, config at {} s",
                    y.dt, s.dt
                ))
                .in_stage("data"));
            }
            self.bundle.add("measurements.csv", series_csv(&y)?);
            return Ok(Data {
                measurements: y,
                sim: None,
            });
        }
        let sim = generate_excitations(&s.excitations, &s.input_names, s.dt, s.n_steps, self.seed)
            .and_then(|exc| {
                simulate_response(&s.truth_system, &exc, &s.sensors, self.cfg.simulation.noise_fraction, self.seed)
            })
            .map_err(|e| e.in_stage("simulate"))?;
        self.bundle.add("excitation.csv", series_csv(&sim.excitation)?);
        self.bundle.add("measurements.csv", series_csv(&sim.measurements)?);
        self.bundle.add("truth_displacement.csv", series_csv(&sim.truth.displacement)?);
        self.bundle.add("truth_velocity.csv", series_csv(&sim.truth.velocity)?);
        self.bundle.add("truth_acceleration.csv", series_csv(&sim.truth.acceleration)?);
        let noise: BTreeMap<&str, f64> = sim
            .measurements
            .names
            .iter()
            .map(String::as_str)
            .zip(sim.noise_std.iter().copied())
            .collect();
        self.summary.insert("simulation".into(), json!({ "noise_std": noise }));
        Ok(Data {
            measurements: sim.measurements.clone(),
            sim: Some(sim),
        })
    }

    fn setup(&self) -> Result<Setup> {
        let est = &self.cfg.estimation;
        let ssm = assemble_continuous_ssm(&self.scen.model_system, &self.scen.sensors)
            .map_err(|e| e.in_stage("assemble"))?;
        let n_s = ssm.n_states();
        let n_o = ssm.n_outputs();
        Ok(Setup {
            q_x: DMatrix::identity(n_s, n_s) * est.q_x,
            r: DMatrix::identity(n_o, n_o) * est.r,
            prior: Prior::isotropic(n_s, est.p_x0),
            ssm,
        })
    }

    fn baseline_config(&self, method: BaselineMethod, n_inputs: usize) -> Result<BaselineConfig> {
        let est = &self.cfg.estimation;
        let mut cfg = BaselineConfig::isotropic(n_inputs, est.q_f);
        if let Some(p) = est.p_f0 {
            cfg.p_f0 = Some(DMatrix::identity(n_inputs, n_inputs) * p);
        }
        if method == BaselineMethod::Akfdm {
            let dofs = self
                .cfg
                .dummy_dofs(self.scen.truth_system.n_physical())
                .map_err(|e| e.in_stage("config"))?;
            cfg = cfg.with_dummies(dofs, est.r_dm);
        }
        Ok(cfg)
    }

    fn gplfm_model(&self, setup: &Setup, params: &HyperParams) -> Result<AugmentedModel> {
        let specs = params.specs(setup.ssm.n_inputs())?;
        let kernels = specs.iter().map(kernel_to_ssm).collect::<Result<Vec<_>>>()?;
        assemble_augmented(&setup.ssm, &kernels, &setup.q_x, &setup.r, &setup.prior)
    }

    fn run_optimizer(&mut self, setup: &Setup, y: &DMatrix<f64>) -> Result<HyperParams> {
        let template = hyper_template(&self.cfg.estimation.kernel, setup.ssm.n_inputs())
            .map_err(|e| e.in_stage("config"))?;
        let problem = NllProblem {
            ssm: &setup.ssm,
            dt: self.scen.dt,
            y,
            q_x: &setup.q_x,
            r: &setup.r,
            prior: &setup.prior,
        };
        let report = optimize(&problem, &template, &self.optimize_options(&template, &problem))
            .map_err(|e| e.in_stage("optimize"))?;
        let best = report.best.clone();
        self.record_optimization(&report)?;
        Ok(best)
    }

    fn optimize_options(&self, template: &HyperParams, problem: &NllProblem<'_>) -> OptimizeOptions {
        let o: &OptimizationConfig = &self.cfg.optimization;
        let mut bounds = default_bounds(template, problem);
        for (b, name) in bounds.iter_mut().zip(template.free_names()) {
            let given = if name.starts_with("log_alpha2") {
                o.log_alpha2_bounds
            } else {
                o.log_lengthscale_bounds
            };
            if let Some([lo, hi]) = given {
                *b = (lo, hi);
            }
        }
        OptimizeOptions {
            n_starts: o.n_starts,
            bounds: Some(bounds),
            simplex: SimplexOptions {
                tol: o.tol,
                max_iter: o.max_iter,
                ..SimplexOptions::default()
            },
            seed: self.seed,
            start_from_template: false,
        }
    }

    fn record_optimization(&mut self, report: &OptimizationReport) -> Result<()> {
        self.summary.insert("optimization".into(), to_value(report)?);
        Ok(())
    }

    /// Hyperparameters for a GPLFM run, optimizing the free ones.
    fn gplfm_params(&mut self, setup: &Setup, y: &DMatrix<f64>) -> Result<HyperParams> {
        let template = hyper_template(&self.cfg.estimation.kernel, setup.ssm.n_inputs())
            .map_err(|e| e.in_stage("config"))?;
        if template.n_free() == 0 {
            Ok(template)
        } else {
            self.run_optimizer(setup, y)
        }
    }

    fn estimate(&mut self) -> Result<()> {
        let data = self.data()?;
        let setup = self.setup()?;
        let y = &data.measurements.values;
        let est = &self.cfg.estimation;
        let (result, model, info) = match est.method {
            Method::Gplfm => {
                let params = self.gplfm_params(&setup, y)?;
                let model = self.gplfm_model(&setup, &params).map_err(|e| e.in_stage("assemble"))?;
                let result = model
                    .discretize(self.scen.dt)
                    .and_then(|d| estimate(&d, y, est.smooth))
                    .map_err(|e| e.in_stage("estimate"))?;
                let specs = params.specs(setup.ssm.n_inputs())?;
                (result, model, json!({ "method": "gplfm", "kernels": specs }))
            }
            m => {
                let method = baseline_method(m);
                let n_f = setup.ssm.n_inputs();
                let bcfg = self.baseline_config(method, n_f)?;
                let result = self.baseline_run(&setup, y, method, &bcfg, est.smooth)?;
                let model = akf_model(&setup.ssm, &bcfg, &setup.q_x, &setup.r, &setup.prior)
                    .map_err(|e| e.in_stage("assemble"))?;
                (result, model, json!({ "method": method.name(), "q_f": est.q_f }))
            }
        };
        self.finish_estimate(&data, &result, info)?;
        let diag = model_diagnostics(&model).map_err(|e| e.in_stage("diagnose"))?;
        self.summary.insert("diagnostics".into(), to_value(&diag)?);
        Ok(())
    }

    fn baseline_run(
        &self,
        setup: &Setup,
        y: &DMatrix<f64>,
        method: BaselineMethod,
        bcfg: &BaselineConfig,
        smooth: bool,
    ) -> Result<EstimationResult> {
        let problem = BaselineProblem {
            ssm: &setup.ssm,
            dt: self.scen.dt,
            y,
            q_x: &setup.q_x,
            r: &setup.r,
            prior: &setup.prior,
        };
        run_baseline(method, &problem, bcfg, smooth).map_err(|e| e.in_stage("estimate"))
    }

    /// Writes estimates and innovations and scores them against the truth.
    fn finish_estimate(&mut self, data: &Data, result: &EstimationResult, mut info: Value) -> Result<()> {
        let times = data.measurements.times();
        let best = result.best();
        let n_phys = self.scen.truth_system.n_physical();
        let phys = |p: &str| -> Vec<String> { (1..=n_phys).map(|d| format!("{p}_{d}")).collect() };
        let groups: [(&str, &SignalEstimate, Vec<String>); 4] = [
            ("displacement", &best.displacement, phys("disp")),
            ("velocity", &best.velocity, phys("vel")),
            ("acceleration", &best.acceleration, phys("acc")),
            ("force", &best.force, self.scen.input_names.clone()),
        ];
        for (group, sig, names) in &groups {
            let (cols, values) = with_variance(names, &sig.mean, &sig.variance);
            self.bundle.add(format!("estimate_{group}.csv"), table_csv(&times, &cols, &values)?);
        }
        let (cols, values) = with_variance(
            &data.measurements.names,
            &result.innovations,
            &result.innovation_variance,
        );
        self.bundle.add("innovations.csv", table_csv(&times, &cols, &values)?);

        if let Value::Object(m) = &mut info {
            m.insert("nll".into(), json!(result.nll));
            m.insert("smoothed".into(), json!(result.smoothed.is_some()));
        }
        self.summary.insert("estimation".into(), info);

        if let Some(sim) = &data.sim {
            let truth: [&DMatrix<f64>; 4] = [
                &sim.truth.displacement.values,
                &sim.truth.velocity.values,
                &sim.truth.acceleration.values,
                &sim.excitation.values,
            ];
            let cutoff = self.cfg.diagnostics.drift_cutoff_hz;
            let mut metrics: BTreeMap<String, BTreeMap<String, SignalMetrics>> = BTreeMap::new();
            for ((group, sig, names), truth) in groups.iter().zip(truth) {
                let entry = metrics.entry(group.to_string()).or_default();
                for (j, name) in names.iter().enumerate() {
                    let m = signal_metrics(
                        sig.mean.column(j).as_slice(),
                        truth.column(j).as_slice(),
                        self.scen.dt,
                        cutoff,
                    )
                    .map_err(|e| e.in_stage("metrics"))?;
                    entry.insert(name.clone(), m);
                }
            }
            self.summary.insert("metrics".into(), to_value(&metrics)?);
        }
        Ok(())
    }

    fn optimize_only(&mut self) -> Result<()> {
        let data = self.data()?;
        let setup = self.setup()?;
        self.run_optimizer(&setup, &data.measurements.values)?;
        Ok(())
    }

    fn lcurve(&mut self) -> Result<()> {
        let data = self.data()?;
        let setup = self.setup()?;
        let y = &data.measurements.values;
        let lc_cfg = &self.cfg.lcurve;
        let method = lc_cfg.method;
        let base = self.baseline_config(method, setup.ssm.n_inputs())?;
        let problem = BaselineProblem {
            ssm: &setup.ssm,
            dt: self.scen.dt,
            y,
            q_x: &setup.q_x,
            r: &setup.r,
            prior: &setup.prior,
        };
        let curve = l_curve(method, &problem, &base, &lc_cfg.grid).map_err(|e| e.in_stage("lcurve"))?;

        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
        w.write_record(["q_f", "q_norm", "residual", "curvature"]).map_err(csv_err)?;
        for (p, k) in curve.points.iter().zip(&curve.curvature) {
            let f = super::io::format_value;
            w.write_record([f(p.q_f), f(p.q_norm), f(p.residual), k.map(f).unwrap_or_default()])
                .map_err(csv_err)?;
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)
            .map_err(|e| Error::Parse(e.to_string()))?;
        self.bundle.add("lcurve.csv", text);

        let selected = lc_cfg.override_q_f.unwrap_or_else(|| curve.corner_q_f());
        let mut lc = to_value(&curve)?;
        if let Value::Object(m) = &mut lc {
            m.insert("corner_q_f".into(), json!(curve.corner_q_f()));
            m.insert("selected_q_f".into(), json!(selected));
        }
        self.summary.insert("lcurve".into(), lc);

        let mut tuned = base.clone();
        let n_f = setup.ssm.n_inputs();
        tuned.q_f = DMatrix::identity(n_f, n_f) * selected;
        tuned.p_f0 = None;
        let result = self.baseline_run(&setup, y, method, &tuned, self.cfg.estimation.smooth)?;
        self.finish_estimate(&data, &result, json!({ "method": method.name(), "q_f": selected }))
    }

    fn diagnose(&mut self) -> Result<()> {
        let setup = self.setup()?;
        let n_f = setup.ssm.n_inputs();
        let mut kernel = self.cfg.estimation.kernel.clone();
        let fixed = |v: &super::config::HyperValue| v.fixed().map(|x| x.unwrap_or(1.0));
        let a = fixed(&kernel.alpha2).map_err(|e| e.in_stage("config"))?;
        let l = fixed(&kernel.lengthscale).map_err(|e| e.in_stage("config"))?;
        kernel.alpha2 = super::config::HyperValue::Value(a);
        kernel.lengthscale = super::config::HyperValue::Value(l);
        let params = hyper_template(&kernel, n_f).map_err(|e| e.in_stage("config"))?;
        let gplfm = self
            .gplfm_model(&setup, &params)
            .and_then(|m| model_diagnostics(&m))
            .map_err(|e| e.in_stage("diagnose"))?;
        let akf = akf_model(&setup.ssm, &BaselineConfig::isotropic(n_f, self.cfg.estimation.q_f), &setup.q_x, &setup.r, &setup.prior)
            .and_then(|m| model_diagnostics(&m))
            .map_err(|e| e.in_stage("diagnose"))?;
        let j_norm = setup.ssm.j_c.norm();
        self.summary.insert(
            "diagnostics".into(),
            json!({
                "gplfm": to_value(&gplfm)?,
                "akf": to_value(&akf)?,
                "feedthrough_norm": j_norm,
                "dkf_applicable": j_norm > 0.0,
            }),
        );
        Ok(())
    }
}

fn baseline_method(m: Method) -> BaselineMethod {
    match m {
        Method::Akf => BaselineMethod::Akf,
        Method::Akfdm => BaselineMethod::Akfdm,
        Method::Dkf => BaselineMethod::Dkf,
        Method::Gplfm => unreachable!("gplfm is not a baseline"),
    }
}

/// Hyperparameter template; values given as `"optimize"` start at 1 and
/// are left free.
pub fn hyper_template(k: &KernelConfig, n_inputs: usize) -> Result<HyperParams> {
    let a = k.alpha2.fixed()?;
    let l = k.lengthscale.fixed()?;
    let one = KernelHyper {
        p: k.p,
        log_alpha2: a.unwrap_or(1.0).ln(),
        log_lengthscale: l.unwrap_or(1.0).ln(),
        fix_alpha2: a.is_some(),
        fix_lengthscale: l.is_some(),
    };
    one.spec().validate()?;
    let n = if k.per_input { n_inputs.max(1) } else { 1 };
    Ok(HyperParams {
        kernels: vec![one; n],
    })
}

/// Interleaves `name, name_var` columns.
fn with_variance(names: &[String], mean: &DMatrix<f64>, var: &DMatrix<f64>) -> (Vec<String>, DMatrix<f64>) {
    let mut cols = Vec::with_capacity(2 * names.len());
    let mut values = DMatrix::zeros(mean.nrows(), 2 * names.len());
    for (j, n) in names.iter().enumerate() {
        cols.push(n.clone());
        cols.push(format!("{n}_var"));
        values.set_column(2 * j, &mean.column(j));
        values.set_column(2 * j + 1, &var.column(j));
    }
    (cols, values)
}
