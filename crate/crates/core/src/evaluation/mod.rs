//! Error metrics, consistency statistics, the linear-Gaussian CRLB, the
//! discrete-time baseline EKF and the Monte Carlo harness.

mod baseline;
mod experiments;
mod monte_carlo;

pub use baseline::{baseline_ekf, BaselineEkfConfig, BaselineTrack, EkfEstimate};
pub use experiments::{
    case_study_mc, case_study_run, scenario_mc, scenario_run, sweep, CaseStudyConfig, CaseStudyReport,
    BaselineSettings, CaseStudyRun, ScenarioExperiment, ScenarioReport, ScenarioRun, SweepCell, SweepGrid,
};
pub use monte_carlo::{monte_carlo, McOutcome};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Median of finite and infinite values alike; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub rmse_overall: f64,
    pub rmse_per_axis: Vec<f64>,
    pub max_error: f64,
    pub samples: usize,
}

/// Root mean squared Euclidean error, per-axis RMSE and the largest error norm.
pub fn rmse(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<ErrorMetrics> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimates.len(), right: truth.len() });
    }
    let d = truth.first().map_or(0, |t| t.len());
    let mut per_axis = vec![0.0; d];
    let mut total = 0.0;
    let mut max_error: f64 = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != d || t.len() != d {
            return Err(Error::DimensionMismatch("estimate and truth dimensions differ".into()));
        }
        let err = e - t;
        for (acc, v) in per_axis.iter_mut().zip(err.iter()) {
            *acc += v * v;
        }
        let sq = err.norm_squared();
        total += sq;
        max_error = max_error.max(sq.sqrt());
    }
    let n = truth.len().max(1) as f64;
    Ok(ErrorMetrics {
        rmse_overall: (total / n).sqrt(),
        rmse_per_axis: per_axis.into_iter().map(|v| (v / n).sqrt()).collect(),
        max_error,
        samples: truth.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AneesReport {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// `d · m`
    pub dof: usize,
}

impl AneesReport {
    pub fn within_bounds(&self) -> bool {
        self.lower <= self.value && self.value <= self.upper
    }
}

/// Two-sided 95% band of `χ²(d m) / (d m)`.
pub fn anees_bounds(d: usize, m: usize) -> (f64, f64) {
    let dof = (d * m).max(1) as f64;
    let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
    (chi2.inverse_cdf(0.025) / dof, chi2.inverse_cdf(0.975) / dof)
}

/// `ε = 1/(d m) Σ eᵢᵀ Σᵢ⁻¹ eᵢ` with its 95% chi-square band.
pub fn anees(errors: &[DVector<f64>], covariances: &[DMatrix<f64>]) -> Result<AneesReport> {
    if errors.len() != covariances.len() {
        return Err(Error::LengthMismatch { left: errors.len(), right: covariances.len() });
    }
    let m = errors.len();
    let d = errors.first().map_or(1, |e| e.len());
    let mut sum = 0.0;
    for (i, (e, cov)) in errors.iter().zip(covariances).enumerate() {
        sum += crate::linalg::mahalanobis_sq(e, cov).ok_or(Error::SingularCovariance { index: i })?;
    }
    let (lower, upper) = anees_bounds(d, m);
    Ok(AneesReport { value: sum / (d * m.max(1)) as f64, lower, upper, dof: d * m })
}

/// `x_{k+1} = F x_k + w_k`, `z_k = H x_k + v_k` with `w ~ N(0, Q)`,
/// `v ~ N(0, R)` and `x_0 ~ N(x̄_0, P_0)`. The first `position_dim`
/// state components are the position.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianSystem {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub initial_cov: DMatrix<f64>,
    pub position_dim: usize,
}

impl LinearGaussianSystem {
    /// Constant-velocity model with white acceleration input of variance
    /// `accel_var` per axis and position measurements of variance `meas_var`.
    pub fn constant_velocity(d: usize, period: f64, accel_var: f64, meas_var: f64, initial_cov: DMatrix<f64>) -> Self {
        let i = DMatrix::<f64>::identity(d, d);
        let mut f = DMatrix::identity(2 * d, 2 * d);
        f.view_mut((0, d), (d, d)).copy_from(&(&i * period));
        let mut g = DMatrix::zeros(2 * d, d);
        g.view_mut((0, 0), (d, d)).copy_from(&(&i * (0.5 * period * period)));
        g.view_mut((d, 0), (d, d)).copy_from(&(&i * period));
        let mut h = DMatrix::zeros(d, 2 * d);
        h.view_mut((0, 0), (d, d)).copy_from(&i);
        Self {
            transition: f,
            process_noise: &g * g.transpose() * accel_var,
            observation: h,
            measurement_noise: i * meas_var,
            initial_cov,
            position_dim: d,
        }
    }
}

/// Per-step trace of the position block of the filtering CRLB.
///
/// For a linear-Gaussian system the bound is the Kalman posterior covariance,
/// obtained here from the Riccati recursion: step 0 updates `P_0` with the
/// first measurement, every later step predicts once and updates once.
pub fn crlb_linear(system: &LinearGaussianSystem, horizon: usize) -> Result<Vec<f64>> {
    let n = system.transition.nrows();
    if system.initial_cov.shape() != (n, n) || system.observation.ncols() != n {
        return Err(Error::DimensionMismatch("linear system matrices disagree".into()));
    }
    let (f, h, r) = (&system.transition, &system.observation, &system.measurement_noise);
    let mut p = system.initial_cov.clone();
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        if k > 0 {
            p = f * &p * f.transpose() + &system.process_noise;
        }
        let s = h * &p * h.transpose() + r;
        let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
        let gain = &p * h.transpose() * s_inv;
        p = &p - &gain * h * &p;
        symmetrize(&mut p);
        let pos = system.position_dim;
        out.push(p.view((0, 0), (pos, pos)).trace().max(0.0));
    }
    Ok(out)
}
