//! TOML experiment configuration. Floor numbers are 1-based throughout the
//! file; they are converted to 0-based dof indices when the scenario is
//! built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structural::{
    build_shear_building, calibrated_uniform_chain, modal_analysis, modal_truncation,
    SensorLayout, StructuralSystem,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub inputs: Vec<InputConfig>,
    pub sensors: SensorConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub optimization: OptimizationConfig,
    #[serde(default)]
    pub lcurve: LCurveConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Measured data to use instead of simulating.
    #[serde(default)]
    pub data: Option<DataConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Shear building from floor masses and storey stiffnesses.
    Shear,
    /// Uniform chain scaled to a target fundamental frequency.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerFloor {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerFloor {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerFloor::Uniform(v) => Ok(vec![*v; n]),
            PerFloor::Each(v) if v.len() == n => Ok(v.clone()),
            PerFloor::Each(v) => Err(Error::Configuration(format!(
                "{what} lists {} values for {n} floors",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub floors: usize,
    /// Floor mass (kg), one value or one per floor.
    pub mass: PerFloor,
    /// Storey stiffness (N/m); shear models only.
    #[serde(default)]
    pub stiffness: Option<PerFloor>,
    /// Rayleigh coefficients `[a0, a1]`; shear models only.
    #[serde(default)]
    pub rayleigh: Option<[f64; 2]>,
    /// Chain models: fundamental frequency (Hz).
    #[serde(default)]
    pub first_frequency_hz: Option<f64>,
    /// Chain models: damping ratio at the two anchor modes.
    #[serde(default)]
    pub damping_ratio: Option<f64>,
    /// Chain models: 1-based anchor modes for Rayleigh damping.
    #[serde(default)]
    pub anchor_modes: Option<[usize; 2]>,
    /// Number of modes kept in the estimation model; the truth is always
    /// simulated with the full model.
    #[serde(default)]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Load,
    Ground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub kind: InputKind,
    /// 1-based floor for loads.
    #[serde(default)]
    pub floor: Option<usize>,
    pub excitation: ExcitationSpec,
}

fn default_impact_start() -> f64 {
    3.0
}
fn default_impact_rise() -> f64 {
    0.05
}
fn default_impact_peak() -> f64 {
    1e4
}
fn default_harmonic_amplitude() -> f64 {
    100.0
}
fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcitationSpec {
    /// Symmetric triangular pulse.
    Impact {
        #[serde(default = "default_impact_start")]
        start: f64,
        #[serde(default = "default_impact_rise")]
        rise: f64,
        #[serde(default = "default_impact_peak")]
        peak: f64,
    },
    Harmonic {
        #[serde(default = "default_harmonic_amplitude")]
        amplitude: f64,
        #[serde(default = "default_one")]
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    WhiteNoise {
        sigma: f64,
    },
    /// Low-pass filtered Gaussian noise rescaled to `sigma`, plus `mean`.
    FilteredNoise {
        sigma: f64,
        cutoff_hz: f64,
        #[serde(default)]
        mean: f64,
    },
    /// Sample path of a zero-mean Matérn process.
    Matern {
        p: u32,
        alpha2: f64,
        lengthscale: f64,
    },
    /// Two-column (time, value) text or CSV file, linearly resampled.
    Record {
        path: PathBuf,
        #[serde(default = "default_one")]
        scale: f64,
    },
    /// Decaying sine bursts repeating every `period` seconds from `start`.
    PulseTrain {
        amplitude: f64,
        frequency_hz: f64,
        period: f64,
        decay: f64,
        #[serde(default = "default_one")]
        start: f64,
    },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub displacement: Vec<usize>,
    #[serde(default)]
    pub velocity: Vec<usize>,
    #[serde(default)]
    pub acceleration: Vec<usize>,
}

fn default_noise_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Noise std as a fraction of each channel's noise-free RMS.
    #[serde(default = "default_noise_fraction")]
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gplfm,
    Akf,
    Akfdm,
    Dkf,
}

/// A hyperparameter given as a number or the keyword `"optimize"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Value(f64),
    Keyword(String),
}

impl HyperValue {
    pub fn fixed(&self) -> Result<Option<f64>> {
        match self {
            HyperValue::Value(v) if *v > 0.0 && v.is_finite() => Ok(Some(*v)),
            HyperValue::Value(v) => Err(Error::Configuration(format!(
                "kernel hyperparameters must be positive, got {v}"
            ))),
            HyperValue::Keyword(k) if k == "optimize" => Ok(None),
            HyperValue::Keyword(k) => Err(Error::Configuration(format!(
                "expected a number or \"optimize\", got \"{k}\""
            ))),
        }
    }
}

fn optimize_keyword() -> HyperValue {
    HyperValue::Keyword("optimize".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub family: crate::kernels::KernelFamily,
    #[serde(default)]
    pub p: u32,
    #[serde(default = "optimize_keyword")]
    pub alpha2: HyperValue,
    #[serde(default = "optimize_keyword")]
    pub lengthscale: HyperValue,
    /// Separate hyperparameters per input instead of one shared set.
    #[serde(default)]
    pub per_input: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: crate::kernels::KernelFamily::Matern,
            p: 0,
            alpha2: optimize_keyword(),
            lengthscale: optimize_keyword(),
            per_input: false,
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_r() -> f64 {
    0.1
}
fn default_tiny() -> f64 {
    1e-10
}
fn default_q_f() -> f64 {
    1e4
}
fn default_r_dm() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_true")]
    pub smooth: bool,
    /// Measurement noise variance, `R = r I`.
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_tiny")]
    pub q_x: f64,
    #[serde(default = "default_tiny")]
    pub p_x0: f64,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Baselines: per-step input noise variance, `Q_f = q_f I`.
    #[serde(default = "default_q_f")]
    pub q_f: f64,
    /// Baselines: initial input variance; defaults to `q_f`.
    #[serde(default)]
    pub p_f0: Option<f64>,
    /// AKFdm: dummy displacement variance.
    #[serde(default = "default_r_dm")]
    pub r_dm: f64,
    /// AKFdm: 1-based floors with dummy observations; all floors if absent.
    #[serde(default)]
    pub dummy_floors: Option<Vec<usize>>,
}

fn default_method() -> Method {
    Method::Gplfm
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            method: Method::Gplfm,
            smooth: true,
            r: default_r(),
            q_x: default_tiny(),
            p_x0: default_tiny(),
            kernel: KernelConfig::default(),
            q_f: default_q_f(),
            p_f0: None,
            r_dm: default_r_dm(),
            dummy_floors: None,
        }
    }
}

fn default_starts() -> usize {
    8
}
fn default_max_iter() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationConfig {
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Natural-log bounds on α².
    #[serde(default)]
    pub log_alpha2_bounds: Option<[f64; 2]>,
    /// Natural-log bounds on the lengthscale.
    #[serde(default)]
    pub log_lengthscale_bounds: Option<[f64; 2]>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            n_starts: default_starts(),
            max_iter: default_max_iter(),
            tol: default_tol(),
            log_alpha2_bounds: None,
            log_lengthscale_bounds: None,
        }
    }
}

fn default_lcurve_method() -> crate::baselines::BaselineMethod {
    crate::baselines::BaselineMethod::Akf
}

fn default_grid() -> Vec<f64> {
    (0..=8).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LCurveConfig {
    #[serde(default = "default_lcurve_method")]
    pub method: crate::baselines::BaselineMethod,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Value reported instead of the detected corner.
    #[serde(default)]
    pub override_q_f: Option<f64>,
}

impl Default for LCurveConfig {
    fn default() -> Self {
        LCurveConfig {
            method: default_lcurve_method(),
            grid: default_grid(),
            override_q_f: None,
        }
    }
}

fn default_cutoff() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_cutoff")]
    pub drift_cutoff_hz: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            drift_cutoff_hz: default_cutoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with a time column followed by one column per sensor channel.
    pub measurements: PathBuf,
}

/// Validated, 0-based view of a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Model used to generate the truth.
    pub truth_system: StructuralSystem,
    /// Model used by the estimators (possibly modally reduced).
    pub model_system: StructuralSystem,
    pub sensors: SensorLayout,
    /// Input names in input-vector order (loads, then ground).
    pub input_names: Vec<String>,
    /// Excitations in input-vector order.
    pub excitations: Vec<ExcitationSpec>,
    pub dt: f64,
    pub n_steps: usize,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Config::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for input in &mut cfg.inputs {
            if let ExcitationSpec::Record { path, .. } = &mut input.excitation {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        if let Some(data) = &mut cfg.data {
            if data.measurements.is_relative() {
                data.measurements = base.join(&data.measurements);
            }
        }
        Ok(cfg)
    }

    fn structure(&self) -> Result<StructuralSystem> {
        let m = &self.model;
        if m.floors == 0 {
            return Err(Error::Configuration("model needs at least one floor".into()));
        }
        match m.kind {
            ModelKind::Shear => {
                let masses = m.mass.expand(m.floors, "mass")?;
                let stiff = m
                    .stiffness
                    .as_ref()
                    .ok_or_else(|| Error::Configuration("shear model needs stiffness".into()))?
                    .expand(m.floors, "stiffness")?;
                let [a0, a1] = m.rayleigh.unwrap_or([0.0, 0.0]);
                build_shear_building(&masses, &stiff, (a0, a1))
            }
            ModelKind::Chain => {
                let mass = match &m.mass {
                    PerFloor::Uniform(v) => *v,
                    PerFloor::Each(_) => {
                        return Err(Error::Configuration("chain model needs a single mass".into()))
                    }
                };
                let f1 = m.first_frequency_hz.ok_or_else(|| {
                    Error::Configuration("chain model needs first_frequency_hz".into())
                })?;
                let [i, j] = m.anchor_modes.unwrap_or([1, 5.min(m.floors)]);
                if i == 0 || j == 0 {
                    return Err(Error::Configuration("anchor modes are 1-based".into()));
                }
                calibrated_uniform_chain(
                    m.floors,
                    mass,
                    f1,
                    m.damping_ratio.unwrap_or(0.01),
                    (i - 1, j - 1),
                )
            }
        }
    }

    /// Checks the whole configuration and converts it to 0-based form.
    pub fn scenario(&self) -> Result<Scenario> {
        let base = self.structure()?;
        let n = base.n_dof();
        let floor_index = |f: usize, what: &str| -> Result<usize> {
            if f == 0 || f > n {
                Err(Error::Configuration(format!(
                    "{what} floor {f} is outside 1..={n}"
                )))
            } else {
                Ok(f - 1)
            }
        };

        let mut loads = Vec::new();
        let mut load_exc = Vec::new();
        let mut ground = Vec::new();
        for input in &self.inputs {
            match input.kind {
                InputKind::Load => {
                    let f = input.floor.ok_or_else(|| {
                        Error::Configuration("load inputs need a floor".into())
                    })?;
                    let d = floor_index(f, "load")?;
                    if loads.contains(&d) {
                        return Err(Error::Configuration(format!("two loads at floor {f}")));
                    }
                    loads.push(d);
                    load_exc.push(input.excitation.clone());
                }
                InputKind::Ground => {
                    if input.floor.is_some() {
                        return Err(Error::Configuration("ground inputs take no floor".into()));
                    }
                    ground.push(input.excitation.clone());
                }
            }
        }
        if loads.is_empty() && ground.is_empty() {
            return Err(Error::Configuration("at least one input is required".into()));
        }
        if ground.len() > 1 {
            return Err(Error::Configuration("at most one ground-motion input".into()));
        }
        let mut sys = base.with_loads(&loads)?;
        if !ground.is_empty() {
            sys = sys.with_ground_motion()?;
        }
        let mut input_names: Vec<String> = loads.iter().map(|d| format!("force_{}", d + 1)).collect();
        if !ground.is_empty() {
            input_names.push("ground_acc".into());
        }
        let mut excitations = load_exc;
        excitations.extend(ground);

        let to_dofs = |floors: &[usize], what: &str| -> Result<Vec<usize>> {
            floors.iter().map(|&f| floor_index(f, what)).collect()
        };
        let sensors = SensorLayout {
            displacement: to_dofs(&self.sensors.displacement, "displacement sensor")?,
            velocity: to_dofs(&self.sensors.velocity, "velocity sensor")?,
            acceleration: to_dofs(&self.sensors.acceleration, "acceleration sensor")?,
        };
        sensors
            .validate(n)
            .map_err(|e| Error::Configuration(e.to_string()))?;

        let sim = &self.simulation;
        if !(sim.sample_rate_hz > 0.0 && sim.sample_rate_hz.is_finite()) {
            return Err(Error::Configuration("sample_rate_hz must be positive".into()));
        }
        if !(sim.duration_s > 0.0 && sim.duration_s.is_finite()) {
            return Err(Error::Configuration("duration_s must be positive".into()));
        }
        if !(sim.noise_fraction >= 0.0 && sim.noise_fraction.is_finite()) {
            return Err(Error::Configuration("noise_fraction must be non-negative".into()));
        }
        let dt = 1.0 / sim.sample_rate_hz;
        let n_steps = (sim.duration_s * sim.sample_rate_hz).round() as usize;
        if n_steps < 2 {
            return Err(Error::Configuration("record must have at least two samples".into()));
        }

        let model_system = match self.model.modes {
            Some(k) if k == 0 || k > n => {
                return Err(Error::Configuration(format!("modes must be in 1..={n}")))
            }
            Some(k) => modal_truncation(&sys, k)?,
            None => sys.clone(),
        };
        let modal = modal_analysis(&model_system)?;
        let f_max = modal.frequencies.iter().copied().fold(0.0, f64::max);
        if sim.sample_rate_hz <= 2.0 * f_max {
            return Err(Error::Configuration(format!(
                "sample rate {} Hz does not exceed twice the highest retained frequency {f_max:.3} Hz",
                sim.sample_rate_hz
            )));
        }

        let est = &self.estimation;
        for (name, v) in [("r", est.r), ("q_x", est.q_x), ("p_x0", est.p_x0), ("q_f", est.q_f), ("r_dm", est.r_dm)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Configuration(format!("{name} must be non-negative")));
            }
        }
        if est.r <= 0.0 {
            return Err(Error::Configuration("r must be positive".into()));
        }
        est.kernel.alpha2.fixed()?;
        est.kernel.lengthscale.fixed()?;
        if self.optimization.n_starts == 0 {
            return Err(Error::Configuration("n_starts must be at least 1".into()));
        }
        if !(self.diagnostics.drift_cutoff_hz > 0.0 && self.diagnostics.drift_cutoff_hz < 0.5 * sim.sample_rate_hz) {
            return Err(Error::Configuration("drift_cutoff_hz must lie below Nyquist".into()));
        }

        Ok(Scenario {
            truth_system: sys,
            model_system,
            sensors,
            input_names,
            excitations,
            dt,
            n_steps,
        })
    }

    /// 0-based dummy dofs for AKFdm.
    pub fn dummy_dofs(&self, n_physical: usize) -> Result<Vec<usize>> {
        match &self.estimation.dummy_floors {
            None => Ok((0..n_physical).collect()),
            Some(f) => f
                .iter()
                .map(|&f| {
                    if f == 0 || f > n_physical {
                        Err(Error::Configuration(format!("dummy floor {f} out of range")))
                    } else {
                        Ok(f - 1)
                    }
                })
                .collect(),
        }
    }
}
