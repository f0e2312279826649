//! Discrete-time constant-velocity EKF with the accelerometer as input.
//!
//! The state is `[s; v]`. Between two records the latest accelerometer
//! reading is held constant; every non-inertial record triggers an EKF update
//! at its timestamp. One state is stored per record.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_factor, symmetrize};
use crate::sensor::{sensing_jacobian, MeasurementRecord, Modality, SensorSuite};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEkfConfig {
    pub initial_position: Vec<f64>,
    #[serde(default)]
    pub initial_velocity: Option<Vec<f64>>,
    pub sigma0_position: f64,
    pub sigma0_velocity: f64,
    /// Acceleration noise variance added to the accelerometer noise when
    /// building the process noise, per axis.
    #[serde(default)]
    pub extra_accel_var: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkfEstimate {
    pub t: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Acceleration held from this state onwards.
    pub input: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineTrack {
    pub dim: usize,
    pub estimates: Vec<EkfEstimate>,
}

impl BaselineTrack {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Position predicted from the latest state at or before `t`.
    pub fn position_at(&self, t: f64) -> Result<DVector<f64>> {
        let idx = self.estimates.partition_point(|e| e.t <= t);
        let first = self.estimates.first().map_or(f64::NAN, |e| e.t);
        let last = self.estimates.last().map_or(f64::NAN, |e| e.t);
        if idx == 0 {
            return Err(Error::OutOfSegment { t, start: first, end: last });
        }
        let e = &self.estimates[idx - 1];
        let d = self.dim;
        let dt = t - e.t;
        let s = e.mean.rows(0, d);
        let v = e.mean.rows(d, d);
        Ok(s + v * dt + &e.input * (0.5 * dt * dt))
    }
}

fn transition(d: usize, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let i = DMatrix::<f64>::identity(d, d);
    let mut f = DMatrix::identity(2 * d, 2 * d);
    f.view_mut((0, d), (d, d)).copy_from(&(&i * dt));
    let mut g = DMatrix::zeros(2 * d, d);
    g.view_mut((0, 0), (d, d)).copy_from(&(&i * (0.5 * dt * dt)));
    g.view_mut((d, 0), (d, d)).copy_from(&(&i * dt));
    (f, g)
}

/// Runs the baseline over a sorted stream.
pub fn baseline_ekf(
    stream: &[MeasurementRecord],
    suite: &SensorSuite,
    config: &BaselineEkfConfig,
) -> Result<BaselineTrack> {
    crate::filter::check_sorted(stream)?;
    let d = config.initial_position.len();
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let v0 = config.initial_velocity.clone().unwrap_or_else(|| vec![0.0; d]);
    if v0.len() != d {
        return Err(Error::DimensionMismatch("initial velocity dimension".into()));
    }
    let input_cov = suite.acc_cov.clone().unwrap_or_else(|| DMatrix::zeros(d, d))
        + DMatrix::identity(d, d) * config.extra_accel_var;
    if input_cov.shape() != (d, d) {
        return Err(Error::DimensionMismatch("accelerometer covariance dimension".into()));
    }

    let mut x = DVector::from_iterator(2 * d, config.initial_position.iter().chain(&v0).copied());
    let mut p = DMatrix::from_diagonal(&DVector::from_fn(2 * d, |i, _| {
        if i < d {
            config.sigma0_position.powi(2)
        } else {
            config.sigma0_velocity.powi(2)
        }
    }));
    let mut input = DVector::zeros(d);
    let mut t_now = stream.first().map_or(0.0, |r| r.t);
    let mut estimates = Vec::with_capacity(stream.len());

    for z in stream {
        let dt = z.t - t_now;
        if dt > 0.0 {
            let (f, g) = transition(d, dt);
            x = &f * &x + &g * &input;
            p = &f * &p * f.transpose() + &g * &input_cov * g.transpose();
            symmetrize(&mut p);
            t_now = z.t;
        }
        if z.modality == Modality::Acc {
            if z.value.len() != d {
                return Err(Error::DimensionMismatch("accelerometer reading dimension".into()));
            }
            input = z.value.clone();
        } else {
            let model = suite.model_for(z)?;
            let s = x.rows(0, d).into_owned();
            let predicted = model.sense(&s)?;
            let jb = sensing_jacobian(&model, &s)?;
            let m = jb.nrows();
            let mut h = DMatrix::zeros(m, 2 * d);
            h.view_mut((0, 0), (m, d)).copy_from(&jb);
            let pht = &p * h.transpose();
            let mut s_cov = &h * &pht + &model.noise_cov;
            symmetrize(&mut s_cov);
            let chol = spd_factor(&s_cov).ok_or(Error::SingularInnovation)?;
            let gain = chol.solve(&pht.transpose()).transpose();
            x += &gain * (&z.value - predicted);
            p -= &gain * pht.transpose();
            symmetrize(&mut p);
        }
        estimates.push(EkfEstimate { t: t_now, mean: x.clone(), covariance: p.clone(), input: input.clone() });
    }
    Ok(BaselineTrack { dim: d, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{AnchorIds, AnchorRegistry};

    fn acc(t: f64, a: &[f64], seq: u64) -> MeasurementRecord {
        MeasurementRecord::new(t, Modality::Acc, DVector::from_column_slice(a), AnchorIds::None, seq).unwrap()
    }

    #[test]
    fn exact_input_on_straight_line_tracks_truth() {
        // constant acceleration from rest, exact readings: ZOH is exact
        let a = [0.2, -0.1];
        let stream: Vec<_> = (0..=200).map(|k| acc(k as f64 * 0.01, &a, k)).collect();
        let suite = SensorSuite { acc_cov: Some(DMatrix::zeros(2, 2)), ..Default::default() };
        let config = BaselineEkfConfig {
            initial_position: vec![1.0, 2.0],
            initial_velocity: None,
            sigma0_position: 0.0,
            sigma0_velocity: 0.0,
            extra_accel_var: 0.0,
        };
        let track = baseline_ekf(&stream, &suite, &config).unwrap();
        assert_eq!(track.len(), stream.len());
        // first reading arrives at t = 0, so the input is active from the start
        for e in &track.estimates {
            let t = e.t;
            assert!((e.mean[0] - (1.0 + 0.5 * a[0] * t * t)).abs() < 1e-10);
            assert!((e.mean[1] - (2.0 + 0.5 * a[1] * t * t)).abs() < 1e-10);
        }
        let p = track.position_at(2.5).unwrap();
        assert!((p[0] - (1.0 + 0.5 * a[0] * 2.5 * 2.5)).abs() < 1e-10);
    }

    #[test]
    fn prediction_only_covariance_grows() {
        let stream: Vec<_> = (0..100).map(|k| acc(k as f64 * 0.02, &[0.0, 0.0, 0.0], k)).collect();
        let suite = SensorSuite { acc_cov: Some(DMatrix::identity(3, 3) * 0.01), ..Default::default() };
        let config = BaselineEkfConfig {
            initial_position: vec![0.0; 3],
            initial_velocity: None,
            sigma0_position: 0.5,
            sigma0_velocity: 0.5,
            extra_accel_var: 0.0,
        };
        let track = baseline_ekf(&stream, &suite, &config).unwrap();
        let traces: Vec<f64> = track.estimates.iter().map(|e| e.covariance.trace()).collect();
        assert!(traces.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn toa_update_pulls_toward_range() {
        let anchors: AnchorRegistry = [(1, DVector::from_vec(vec![0.0, 0.0]))].into_iter().collect();
        let suite = SensorSuite { anchors, toa_var: Some(0.01), ..Default::default() };
        let config = BaselineEkfConfig {
            initial_position: vec![2.0, 0.0],
            initial_velocity: None,
            sigma0_position: 1.0,
            sigma0_velocity: 0.1,
            extra_accel_var: 0.0,
        };
        let z = MeasurementRecord::new(0.0, Modality::Toa, DVector::from_vec(vec![3.0]), AnchorIds::One(1), 0).unwrap();
        let track = baseline_ekf(&[z], &suite, &config).unwrap();
        let x = &track.estimates[0].mean;
        assert!(x[0] > 2.9 && x[0] < 3.0);
        assert_eq!(x[1], 0.0);
    }
}
