use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{BaselineSettings, CaseStudyConfig, ScenarioExperiment, SweepGrid};
use crate::filter::FilterConfig;
use crate::simulation::{
    lissajous_cv_config, sample_measurements, simulate_cv_truth, CovSpec, LissajousSpec, SampledStream,
    ScenarioConfig, Schedules, SinusoidalCurve, Trajectory, TruthSample, TruthTrajectory,
};

const CASE_STUDY: &str = r#"
[truth]
kind = "lissajous-cv"
period = 0.01
accel_noise_var = 0.25

[truth.lissajous]
amplitude = [2.0, 2.0]
frequency = [1.0, 1.0]
phase = 1.5707963267948966
duration = 6.283185307179586

[scenario.noise]
gps = 0.01

[filter]
tau = 0.01

[filter.process_noise]
omega_retained = 0.5
nu_new = 1.0

[evaluation]
runs = 200
query_rate_hz = 100.0
tau_sweep = [0.1, 0.05, 0.01]
"#;

const FIGURE_EIGHT: &str = r#"
[truth]
kind = "curve"
rate_hz = 200.0

[truth.curve]
center = [0.0, 0.0, 1.2]
amplitude = [1.5, 1.0, 0.3]
frequency = [0.3141592653589793, 0.6283185307179586, 0.3141592653589793]
phase = [0.0, 0.0, 1.5707963267948966]
duration = 30.0

[[scenario.anchors]]
id = 0
position = [-4.0, -4.0, 0.1]
[[scenario.anchors]]
id = 1
position = [4.0, -4.0, 0.1]
[[scenario.anchors]]
id = 2
position = [4.0, 4.0, 0.1]
[[scenario.anchors]]
id = 3
position = [-4.0, 4.0, 0.1]
[[scenario.anchors]]
id = 4
position = [-4.0, -4.0, 3.0]
[[scenario.anchors]]
id = 5
position = [4.0, -4.0, 3.0]
[[scenario.anchors]]
id = 6
position = [4.0, 4.0, 3.0]
[[scenario.anchors]]
id = 7
position = [-4.0, 4.0, 3.0]
"#;

const TDOA_REAL: &str = r#"
[scenario.schedule.tdoa]
rate_hz = 100.0

[scenario.noise]
tdoa = 0.05

[scenario.outliers]
probability = 0.05
offset = { kind = "constant", value = 5.0 }

[filter]
tau = 2.0
gate_threshold_sq = 15.0

[filter.process_noise]
omega_retained = 0.01
nu_new = 0.01

[evaluation]
runs = 50
compare_ungated = true
"#;

const TOA_INERTIAL: &str = r#"
[scenario.schedule.toa]
rate_hz = 200.0

[scenario.schedule.acc]
rate_hz = 500.0

[scenario.noise]
toa = 0.01
acc = 0.01

[filter]
tau = 1.0

[filter.process_noise]
omega_retained = 0.0000002
nu_new = 0.01

[baseline]
sigma0_velocity = 1.0

[evaluation]
runs = 100
"#;

const SWEEP: &str = r#"
[scenario.noise]
toa = 0.1

[evaluation]
runs = 10

[sweep]
ratios = [1.0, 0.1, 0.01]
nu = 0.1
taus = [0.1, 1.0, 6.0]
"#;

/// Names accepted by `preset = "..."`.
pub fn preset_names() -> &'static [&'static str] {
    &["case-study", "tdoa-real", "toa-inertial", "sweep"]
}

/// Full TOML text of a named preset.
pub fn preset_source(name: &str) -> Option<String> {
    let parts: &[&str] = match name {
        "case-study" => &[CASE_STUDY],
        "tdoa-real" => &[FIGURE_EIGHT, TDOA_REAL],
        "toa-inertial" => &[FIGURE_EIGHT, TOA_INERTIAL],
        "sweep" => &[FIGURE_EIGHT, TOA_INERTIAL, SWEEP],
        _ => return None,
    };
    let mut merged = toml::Table::new();
    for part in parts {
        let table: toml::Table = part.parse().expect("embedded preset is valid TOML");
        deep_merge(&mut merged, table);
    }
    Some(toml::to_string(&merged).expect("preset serializes"))
}

/// Overlays `over` onto `base`; tables merge key by key, everything else is replaced.
fn deep_merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            // a table that names a different `kind` replaces its base wholesale
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if o.get("kind").is_none_or(|k| b.get("kind") == Some(k)) =>
            {
                deep_merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Ground-truth generator of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthConfig {
    /// Noisy constant-velocity motion steered along a planar Lissajous curve.
    LissajousCv { lissajous: LissajousSpec, period: f64, accel_noise_var: f64 },
    /// Analytic curve, tabulated at `rate_hz` for scoring and truth files.
    Curve { curve: SinusoidalCurve, rate_hz: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub runs: usize,
    pub seed_base: u64,
    /// Rate of the estimate table written by `track`.
    pub query_rate_hz: f64,
    pub compare_ungated: bool,
    /// `τ` values swept for the case study.
    pub tau_sweep: Vec<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { runs: 100, seed_base: 0, query_rate_hz: 200.0, compare_ungated: false, tau_sweep: Vec::new() }
    }
}

/// Complete experiment description, typically a preset with user overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default)]
    pub preset: Option<String>,
    pub truth: TruthConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    #[serde(default)]
    pub baseline: Option<BaselineSettings>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

impl AppConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml_str(&format!("preset = {name:?}\n"))
    }

    /// Parses TOML; a `preset` key pulls in that preset underneath the file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        let mut merged = match user.get("preset") {
            Some(toml::Value::String(name)) => {
                let source = preset_source(name).ok_or_else(|| {
                    Error::ConfigParse(format!("unknown preset {name:?}; known: {}", preset_names().join(", ")))
                })?;
                source.parse::<toml::Table>().map_err(|e| Error::ConfigParse(e.to_string()))?
            }
            Some(other) => return Err(Error::ConfigParse(format!("preset must be a string, got {other}"))),
            None => toml::Table::new(),
        };
        deep_merge(&mut merged, user);
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        match &self.truth {
            TruthConfig::LissajousCv { .. } => 2,
            TruthConfig::Curve { curve, .. } => curve.center.len(),
        }
    }

    pub fn duration(&self) -> f64 {
        match &self.truth {
            TruthConfig::LissajousCv { lissajous, .. } => lissajous.duration,
            TruthConfig::Curve { curve, .. } => curve.duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if self.duration() == 0.0 {
            return Ok(());
        }
        match &self.truth {
            TruthConfig::LissajousCv { lissajous, .. } => lissajous.validate()?,
            TruthConfig::Curve { curve, rate_hz } => {
                curve.validate()?;
                if !(*rate_hz > 0.0) {
                    return Err(Error::InvalidConfig(format!("truth rate must be > 0, got {rate_hz}")));
                }
            }
        }
        self.scenario.validate(self.dim())
    }

    /// Replaces the seed, `τ` and gate threshold where given.
    pub fn apply_overrides(&mut self, seed: Option<u64>, tau: Option<f64>, gate: Option<f64>) -> Result<()> {
        if let Some(seed) = seed {
            self.scenario.seed = seed;
            self.evaluation.seed_base = seed;
        }
        if let Some(tau) = tau {
            self.filter.tau = tau;
        }
        if let Some(gate) = gate {
            self.filter.gate_threshold_sq = Some(gate);
        }
        self.validate()
    }

    pub fn case_study(&self) -> Result<CaseStudyConfig> {
        let TruthConfig::LissajousCv { lissajous, period, accel_noise_var } = &self.truth else {
            return Err(Error::InvalidConfig("the case study needs a lissajous-cv truth".into()));
        };
        let CovSpec::Isotropic(gps_var) = self.scenario.noise.gps else {
            return Err(Error::InvalidConfig("the case study needs an isotropic GPS variance".into()));
        };
        Ok(CaseStudyConfig {
            lissajous: *lissajous,
            period: *period,
            accel_noise_var: *accel_noise_var,
            gps_var,
            filter: self.filter.clone(),
        })
    }

    pub fn scenario_experiment(&self) -> Result<ScenarioExperiment> {
        let TruthConfig::Curve { curve, rate_hz } = &self.truth else {
            return Err(Error::InvalidConfig("scenario experiments need a curve truth".into()));
        };
        Ok(ScenarioExperiment {
            curve: curve.clone(),
            truth_rate_hz: *rate_hz,
            scenario: self.scenario.clone(),
            filter: self.filter.clone(),
            compare_ungated: self.evaluation.compare_ungated,
            baseline: self.baseline.clone(),
        })
    }

    /// Truth samples and the measurement stream for one seed. A zero-duration
    /// experiment yields neither.
    pub fn simulate(&self, seed: u64) -> Result<(Vec<TruthSample>, SampledStream)> {
        if self.duration() == 0.0 {
            return Ok((Vec::new(), SampledStream::default()));
        }
        let mut scenario = self.scenario.clone();
        scenario.seed = seed;
        match &self.truth {
            TruthConfig::LissajousCv { lissajous, period, accel_noise_var } => {
                let truth = simulate_cv_truth(&lissajous_cv_config(lissajous, *period, *accel_noise_var, seed)?)?;
                if scenario.schedule == Schedules::default() {
                    scenario = self.case_study()?.scenario(&truth, seed);
                }
                let stream = sample_measurements(&truth, &scenario)?;
                Ok((truth.samples().to_vec(), stream))
            }
            TruthConfig::Curve { curve, rate_hz } => {
                let stream = sample_measurements(curve, &scenario)?;
                let truth = TruthTrajectory::tabulate(curve, *rate_hz)?;
                Ok((truth.samples().to_vec(), stream))
            }
        }
    }

    /// Start position of the configured trajectory.
    pub fn start_position(&self) -> Result<Vec<f64>> {
        Ok(match &self.truth {
            TruthConfig::LissajousCv { lissajous, .. } => lissajous.position(0.0).iter().copied().collect(),
            TruthConfig::Curve { curve, .. } => curve.position(0.0)?.iter().copied().collect(),
        })
    }
}
