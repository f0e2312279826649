//! End-to-end pipelines: simulate, track, score.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{anees_bounds, baseline_ekf, crlb_linear, monte_carlo, rmse, BaselineEkfConfig, LinearGaussianSystem, McOutcome};
use crate::error::{Error, Result};
use crate::filter::{interpolate_posterior, FilterConfig, RunOptions, Sere};
use crate::simulation::{
    lissajous_cv_config, sample_measurements, simulate_cv_truth, CovSpec, LissajousSpec, NoiseConfig,
    ScenarioConfig, Schedule, Schedules, SinusoidalCurve, Trajectory, TruthTrajectory,
};
use crate::spline::KinematicOrder;
use crate::tris::ProcessNoiseSpec;

/// Planar GPS tracking of a Lissajous-following constant-velocity truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub lissajous: LissajousSpec,
    /// Truth and GPS sampling period `T`.
    pub period: f64,
    pub accel_noise_var: f64,
    pub gps_var: f64,
    pub filter: FilterConfig,
}

/// Filtered position errors of one run, one entry per GPS sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudyRun {
    pub times: Vec<f64>,
    pub errors: Vec<DVector<f64>>,
    /// `eᵀ Σ⁻¹ e` with `Σ` from probabilistic interpolation.
    pub nees: Vec<f64>,
    pub control_points: usize,
}

impl CaseStudyConfig {
    pub fn truth(&self, seed: u64) -> Result<TruthTrajectory> {
        simulate_cv_truth(&lissajous_cv_config(&self.lissajous, self.period, self.accel_noise_var, seed)?)
    }

    pub fn scenario(&self, truth: &TruthTrajectory, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            schedule: Schedules {
                gps: Some(Schedule { times: Some(truth.times()), ..Default::default() }),
                ..Default::default()
            },
            noise: NoiseConfig { gps: CovSpec::Isotropic(self.gps_var), ..Default::default() },
            seed,
            ..Default::default()
        }
    }
}

/// Simulates one run and scores the filtered posterior right after every update.
pub fn case_study_run(config: &CaseStudyConfig, seed: u64) -> Result<CaseStudyRun> {
    let truth = config.truth(seed)?;
    let scenario = config.scenario(&truth, seed);
    let stream = sample_measurements(&truth, &scenario)?;
    let suite = scenario.sensor_suite(2)?;
    let sere = Sere::new(config.filter.clone(), 2)?;

    let n = stream.records.len();
    let mut out = CaseStudyRun { times: Vec::with_capacity(n), errors: Vec::with_capacity(n), nees: Vec::with_capacity(n), control_points: 0 };
    let mut failure = None;
    let track = sere.track(&stream.records, &suite, RunOptions::default(), |state, report| {
        if failure.is_some() {
            return;
        }
        let scored = interpolate_posterior(state, &[(report.t, KinematicOrder::Position)]).and_then(|post| {
            let e = truth.position(report.t)? - &post.mean;
            let nees = crate::linalg::mahalanobis_sq(&e, &post.covariance)
                .ok_or(Error::SingularCovariance { index: out.times.len() })?;
            Ok((e, nees))
        });
        match scored {
            Ok((e, nees)) => {
                out.times.push(report.t);
                out.errors.push(e);
                out.nees.push(nees);
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    out.control_points = track.polygon.len();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudyReport {
    pub times: Vec<f64>,
    /// Mean error across runs, per step.
    pub mean_error: Vec<DVector<f64>>,
    /// Per-axis sample standard deviation of the error across runs.
    pub error_std: Vec<DVector<f64>>,
    pub rmse: Vec<f64>,
    /// Square root of the position trace of the CRLB.
    pub crlb: Vec<f64>,
    pub anees: Vec<f64>,
    pub anees_bounds: (f64, f64),
    pub rmse_overall: f64,
    pub runs: usize,
    pub failures: usize,
}

pub fn case_study_mc(config: &CaseStudyConfig, runs: usize, seed_base: u64) -> Result<CaseStudyReport> {
    let outcome = monte_carlo(runs, seed_base, |seed| case_study_run(config, seed));
    let first = outcome
        .values()
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("all {runs} Monte Carlo runs failed")))?;
    let steps = first.times.len();
    let times = first.times.clone();
    let d = 2;
    for run in outcome.values() {
        if run.times.len() != steps {
            return Err(Error::LengthMismatch { left: run.times.len(), right: steps });
        }
    }
    let m = outcome.successes();
    let mf = m as f64;

    let mut mean_error = vec![DVector::zeros(d); steps];
    let mut sq = vec![0.0; steps];
    let mut nees = vec![0.0; steps];
    for run in outcome.values() {
        for k in 0..steps {
            mean_error[k] += &run.errors[k];
            sq[k] += run.errors[k].norm_squared();
            nees[k] += run.nees[k];
        }
    }
    for e in &mut mean_error {
        *e /= mf;
    }
    let mut var = vec![DVector::zeros(d); steps];
    for run in outcome.values() {
        for k in 0..steps {
            let c = &run.errors[k] - &mean_error[k];
            var[k] += c.component_mul(&c);
        }
    }
    let error_std = var.into_iter().map(|v| (v / (mf - 1.0).max(1.0)).map(f64::sqrt)).collect();

    let system = LinearGaussianSystem::constant_velocity(
        d,
        config.period,
        config.accel_noise_var,
        config.gps_var,
        DMatrix::zeros(2 * d, 2 * d),
    );
    let crlb = crlb_linear(&system, steps)?.into_iter().map(f64::sqrt).collect();
    let total: f64 = sq.iter().sum();
    Ok(CaseStudyReport {
        times,
        mean_error,
        error_std,
        rmse: sq.iter().map(|s| (s / mf).sqrt()).collect(),
        crlb,
        anees: nees.iter().map(|s| s / (d as f64 * mf)).collect(),
        anees_bounds: anees_bounds(d, m),
        rmse_overall: (total / (mf * steps as f64)).sqrt(),
        runs: m,
        failures: outcome.failures.len(),
    })
}

/// Baseline EKF settings; the initial position and its spread are shared with SERE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSettings {
    pub sigma0_velocity: f64,
    #[serde(default)]
    pub extra_accel_var: f64,
}

/// Tracking over an analytic 3-D trajectory with scheduled sensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioExperiment {
    pub curve: SinusoidalCurve,
    /// Rate of the truth timestamps at which estimates are scored.
    pub truth_rate_hz: f64,
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    /// Also run SERE without the gate on the same stream.
    #[serde(default)]
    pub compare_ungated: bool,
    #[serde(default)]
    pub baseline: Option<BaselineSettings>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub rmse_sere: f64,
    /// `inf` when the ungated filter failed.
    pub rmse_ungated: Option<f64>,
    pub rmse_baseline: Option<f64>,
    pub outliers_injected: usize,
    pub outliers_rejected: usize,
    pub measurements_rejected: usize,
    pub records: usize,
    pub control_points: usize,
    pub baseline_states: Option<usize>,
}

impl ScenarioExperiment {
    /// Start position shared by both filters: the configured guess, else the
    /// true start of the trajectory.
    pub fn initial_position(&self) -> Result<Vec<f64>> {
        match &self.filter.init.position_guess {
            Some(p) => Ok(p.clone()),
            None => Ok(self.curve.position(0.0)?.iter().copied().collect()),
        }
    }

    fn filter_config(&self) -> Result<FilterConfig> {
        let mut f = self.filter.clone();
        f.init.position_guess = Some(self.initial_position()?);
        Ok(f)
    }
}

fn score_polygon(
    polygon: &crate::filter::ControlPolygon,
    eval_times: &[f64],
    truth: &[DVector<f64>],
) -> Result<f64> {
    let est = eval_times
        .iter()
        .map(|t| polygon.interpolate(*t, KinematicOrder::Position))
        .collect::<Result<Vec<_>>>()?;
    Ok(rmse(&est, truth)?.rmse_overall)
}

pub fn scenario_run(exp: &ScenarioExperiment, seed: u64) -> Result<ScenarioRun> {
    exp.curve.validate()?;
    let d = exp.curve.dim();
    let mut scenario = exp.scenario.clone();
    scenario.seed = seed;
    let stream = sample_measurements(&exp.curve, &scenario)?;
    let records = &stream.records;
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::InsufficientInitData("empty measurement stream".into()));
    };
    let suite = scenario.sensor_suite(d)?;
    let eval_times: Vec<f64> = crate::simulation::rate_schedule(exp.curve.span(), exp.truth_rate_hz)?
        .into_iter()
        .filter(|t| *t >= first.t && *t <= last.t)
        .collect();
    let truth = eval_times.iter().map(|t| exp.curve.position(*t)).collect::<Result<Vec<_>>>()?;

    let filter = exp.filter_config()?;
    let sere = Sere::new(filter.clone(), d)?;
    let track = sere.track(records, &suite, RunOptions::default(), |_, _| {})?;
    let rmse_sere = score_polygon(&track.polygon, &eval_times, &truth)?;

    let outlier_seqs: BTreeSet<u64> = stream.outliers.iter().map(|o| o.seq).collect();
    let rejected: Vec<u64> = track.reports.iter().filter(|r| !r.accepted).map(|r| r.seq).collect();
    let outliers_rejected = rejected.iter().filter(|s| outlier_seqs.contains(s)).count();

    let rmse_ungated = if exp.compare_ungated {
        let mut ungated = filter.clone();
        ungated.gate_threshold_sq = None;
        let result = Sere::new(ungated, d)?
            .track(records, &suite, RunOptions::default(), |_, _| {})
            .and_then(|t| score_polygon(&t.polygon, &eval_times, &truth));
        Some(match result {
            Ok(r) if r.is_finite() => r,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::info!("ungated run with seed {seed} failed: {e}");
                f64::INFINITY
            }
        })
    } else {
        None
    };

    let (rmse_baseline, baseline_states) = match &exp.baseline {
        Some(settings) => {
            let config = BaselineEkfConfig {
                initial_position: exp.initial_position()?,
                initial_velocity: None,
                sigma0_position: filter.init.sigma0,
                sigma0_velocity: settings.sigma0_velocity,
                extra_accel_var: settings.extra_accel_var,
            };
            let track = baseline_ekf(records, &suite, &config)?;
            let est = eval_times.iter().map(|t| track.position_at(*t)).collect::<Result<Vec<_>>>()?;
            (Some(rmse(&est, &truth)?.rmse_overall), Some(track.len()))
        }
        None => (None, None),
    };

    Ok(ScenarioRun {
        rmse_sere,
        rmse_ungated,
        rmse_baseline,
        outliers_injected: stream.outliers.len(),
        outliers_rejected,
        measurements_rejected: rejected.len(),
        records: records.len(),
        control_points: track.polygon.len(),
        baseline_states,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub outcome: McOutcome<ScenarioRun>,
}

impl ScenarioReport {
    pub fn sere_rmse(&self) -> Vec<f64> {
        self.outcome.values().map(|r| r.rmse_sere).collect()
    }

    pub fn baseline_rmse(&self) -> Vec<f64> {
        self.outcome.values().filter_map(|r| r.rmse_baseline).collect()
    }

    pub fn ungated_rmse(&self) -> Vec<f64> {
        self.outcome.values().filter_map(|r| r.rmse_ungated).collect()
    }
}

pub fn scenario_mc(exp: &ScenarioExperiment, runs: usize, seed_base: u64) -> ScenarioReport {
    ScenarioReport { outcome: monte_carlo(runs, seed_base, |seed| scenario_run(exp, seed)) }
}

/// Grid of `(ω/ν, τ)` values with fixed `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub ratios: Vec<f64>,
    pub nu: f64,
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ratio: f64,
    pub tau: f64,
    pub omega: f64,
    pub nu: f64,
    pub rmse_mean: f64,
    pub rmse_median: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Evaluates every grid cell on the same seeds. Cells are ordered by ratio,
/// then by `τ`.
pub fn sweep(exp: &ScenarioExperiment, grid: &SweepGrid, runs: usize, seed_base: u64) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::with_capacity(grid.ratios.len() * grid.taus.len());
    for &ratio in &grid.ratios {
        for &tau in &grid.taus {
            let mut cell_exp = exp.clone();
            cell_exp.compare_ungated = false;
            cell_exp.baseline = None;
            cell_exp.filter.tau = tau;
            cell_exp.filter.process_noise = ProcessNoiseSpec::new(ratio * grid.nu, grid.nu);
            let report = scenario_mc(&cell_exp, runs, seed_base);
            let values = report.sere_rmse();
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!("every run failed for ratio {ratio}, tau {tau}")));
            }
            cells.push(SweepCell {
                ratio,
                tau,
                omega: ratio * grid.nu,
                nu: grid.nu,
                rmse_mean: values.iter().sum::<f64>() / values.len() as f64,
                rmse_median: super::median(&values),
                runs: values.len(),
                failures: report.outcome.failures.len(),
            });
        }
    }
    Ok(cells)
}
