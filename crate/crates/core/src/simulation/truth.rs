//! Ground-truth trajectories.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GaussianSampler;
use crate::error::{Error, Result};

/// Continuous-time access to a truth trajectory.
pub trait Trajectory: Send + Sync {
    fn dim(&self) -> usize;
    /// Closed interval on which the trajectory is defined.
    fn span(&self) -> (f64, f64);
    fn position(&self, t: f64) -> Result<DVector<f64>>;
    fn velocity(&self, t: f64) -> Result<DVector<f64>>;
    fn acceleration(&self, t: f64) -> Result<DVector<f64>>;
}

fn check_span(t: f64, span: (f64, f64)) -> Result<()> {
    let slack = 1e-9 * (1.0 + (span.1 - span.0).abs());
    if !(t >= span.0 - slack && t <= span.1 + slack) {
        return Err(Error::ScheduleOutOfRange { t, start: span.0, end: span.1 });
    }
    Ok(())
}

/// One tabulated truth sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    /// Acceleration acting on `[t, t_next)`.
    pub acceleration: DVector<f64>,
}

/// Tabulated truth, linearly interpolated between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTrajectory {
    samples: Vec<TruthSample>,
}

impl TruthTrajectory {
    pub fn new(samples: Vec<TruthSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidConfig("truth trajectory has no samples".into()))?;
        let d = first.position.len();
        for (i, s) in samples.iter().enumerate() {
            if s.position.len() != d || s.velocity.len() != d || s.acceleration.len() != d {
                return Err(Error::DimensionMismatch(format!("truth sample {i} has mixed dimensions")));
            }
            if i > 0 && !(s.t > samples[i - 1].t) {
                return Err(Error::UnsortedStream { index: i });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TruthSample] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Tabulates any trajectory at `rate_hz` over its span.
    pub fn tabulate(trajectory: &dyn Trajectory, rate_hz: f64) -> Result<Self> {
        let times = super::rate_schedule(trajectory.span(), rate_hz)?;
        let samples = times
            .into_iter()
            .map(|t| {
                Ok(TruthSample {
                    t,
                    position: trajectory.position(t)?,
                    velocity: trajectory.velocity(t)?,
                    acceleration: trajectory.acceleration(t)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        check_span(t, self.span())?;
        let n = self.samples.len();
        if n == 1 {
            return Ok((0, 0.0));
        }
        let hi = self.samples.partition_point(|s| s.t < t).clamp(1, n - 1);
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        Ok((hi - 1, f))
    }

    fn lerp(&self, t: f64, field: impl Fn(&TruthSample) -> &DVector<f64>) -> Result<DVector<f64>> {
        let (i, f) = self.bracket(t)?;
        let a = field(&self.samples[i]);
        if f == 0.0 {
            return Ok(a.clone());
        }
        let b = field(&self.samples[i + 1]);
        if f == 1.0 {
            return Ok(b.clone());
        }
        Ok(a * (1.0 - f) + b * f)
    }
}

impl Trajectory for TruthTrajectory {
    fn dim(&self) -> usize {
        self.samples[0].position.len()
    }

    fn span(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    fn position(&self, t: f64) -> Result<DVector<f64>> {
        self.lerp(t, |s| &s.position)
    }

    fn velocity(&self, t: f64) -> Result<DVector<f64>> {
        self.lerp(t, |s| &s.velocity)
    }

    /// Piecewise constant, matching the zero-order-hold input of the truth model.
    fn acceleration(&self, t: f64) -> Result<DVector<f64>> {
        let (i, f) = self.bracket(t)?;
        let i = if f == 1.0 { i + 1 } else { i };
        Ok(self.samples[i].acceleration.clone())
    }
}

/// Constant-velocity truth driven by a known acceleration input plus noise:
///
/// `s_{k+1} = s_k + T v_k + T²/2 (a_k + w_k)`, `v_{k+1} = v_k + T (a_k + w_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CvTruthConfig {
    pub period: f64,
    /// Input per step; missing entries are zero. Empty means no input.
    pub accel_input: Vec<DVector<f64>>,
    pub accel_noise_cov: DMatrix<f64>,
    pub initial_position: DVector<f64>,
    pub initial_velocity: DVector<f64>,
    pub horizon: usize,
    pub seed: u64,
}

impl CvTruthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidConfig(format!("sample period must be > 0, got {}", self.period)));
        }
        let d = self.initial_position.len();
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.initial_velocity.len() != d
            || self.accel_noise_cov.shape() != (d, d)
            || self.accel_input.iter().any(|a| a.len() != d)
        {
            return Err(Error::DimensionMismatch("constant-velocity truth inputs disagree in dimension".into()));
        }
        crate::linalg::check_psd(&self.accel_noise_cov, "acceleration noise")
    }
}

/// Rolls the constant-velocity recursion out for `horizon` steps, returning
/// `horizon + 1` samples starting at `t = 0`.
pub fn simulate_cv_truth(config: &CvTruthConfig) -> Result<TruthTrajectory> {
    config.validate()?;
    let d = config.initial_position.len();
    let period = config.period;
    let noise = GaussianSampler::new(&config.accel_noise_cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(super::TRUTH_STREAM);

    let mut samples = Vec::with_capacity(config.horizon + 1);
    let mut s = config.initial_position.clone();
    let mut v = config.initial_velocity.clone();
    for k in 0..=config.horizon {
        let t = k as f64 * period;
        if k == config.horizon {
            let last = samples.last().map(|p: &TruthSample| p.acceleration.clone());
            samples.push(TruthSample {
                t,
                position: s.clone(),
                velocity: v.clone(),
                acceleration: last.unwrap_or_else(|| DVector::zeros(d)),
            });
            break;
        }
        let input = config.accel_input.get(k).cloned().unwrap_or_else(|| DVector::zeros(d));
        let a = input + noise.sample(&mut rng);
        samples.push(TruthSample { t, position: s.clone(), velocity: v.clone(), acceleration: a.clone() });
        s += &v * period + &a * (0.5 * period * period);
        v += &a * period;
    }
    TruthTrajectory::new(samples)
}

/// Planar Lissajous curve `s(t) = (A_x sin(a t + δ), A_y sin(b t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LissajousSpec {
    /// `(A_x, A_y)` in meters.
    pub amplitude: [f64; 2],
    /// `(a, b)` in rad/s.
    pub frequency: [f64; 2],
    /// `δ` in rad.
    pub phase: f64,
    pub duration: f64,
}

/// Named Lissajous curves of increasing complexity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LissajousPreset {
    A,
    B,
    C,
    D,
}

impl LissajousSpec {
    /// Amplitude 2 m, `δ = π/2`, frequency ratios 1:1, 1:2, 2:3 and 3:4, one
    /// full period of the curve.
    pub fn preset(preset: LissajousPreset) -> Self {
        let (a, b) = match preset {
            LissajousPreset::A => (1.0, 1.0),
            LissajousPreset::B => (1.0, 2.0),
            LissajousPreset::C => (2.0, 3.0),
            LissajousPreset::D => (3.0, 4.0),
        };
        Self {
            amplitude: [2.0, 2.0],
            frequency: [a, b],
            phase: std::f64::consts::FRAC_PI_2,
            duration: 2.0 * std::f64::consts::PI,
        }
    }

    /// Same shape traversed `factor` times faster.
    pub fn time_scaled(mut self, factor: f64) -> Self {
        self.frequency = [self.frequency[0] * factor, self.frequency[1] * factor];
        self.duration /= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.amplitude.iter().chain(&self.frequency).all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.duration > 0.0) || !self.phase.is_finite() {
            return Err(Error::InvalidConfig(
                "Lissajous amplitudes, frequencies and duration must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        let [ax, ay] = self.amplitude;
        let [a, b] = self.frequency;
        DVector::from_vec(vec![ax * (a * t + self.phase).sin(), ay * (b * t).sin()])
    }

    pub fn velocity(&self, t: f64) -> DVector<f64> {
        let [ax, ay] = self.amplitude;
        let [a, b] = self.frequency;
        DVector::from_vec(vec![ax * a * (a * t + self.phase).cos(), ay * b * (b * t).cos()])
    }

    pub fn acceleration(&self, t: f64) -> DVector<f64> {
        let [ax, ay] = self.amplitude;
        let [a, b] = self.frequency;
        DVector::from_vec(vec![-ax * a * a * (a * t + self.phase).sin(), -ay * b * b * (b * t).sin()])
    }

    /// Number of sampling steps of length `period` covering the duration.
    pub fn steps(&self, period: f64) -> usize {
        (self.duration / period - 1e-9).ceil().max(0.0) as usize
    }
}

/// Input table for the constant-velocity truth so that it follows the curve.
///
/// Entry `k` is the mean acceleration over `[t_k, t_{k+1}]`, i.e.
/// `(ṡ(t_{k+1}) − ṡ(t_k)) / T`. Started at `(s(0), ṡ(0))`, the noise-free
/// rollout then reproduces the curve velocity exactly at every sample and
/// the position up to the trapezoidal error `O(T²)`.
pub fn lissajous_accel_schedule(spec: &LissajousSpec, period: f64) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    if !(period > 0.0) {
        return Err(Error::InvalidConfig(format!("sample period must be > 0, got {period}")));
    }
    Ok((0..spec.steps(period))
        .map(|k| {
            let t0 = k as f64 * period;
            (spec.velocity(t0 + period) - spec.velocity(t0)) / period
        })
        .collect())
}

/// Constant-velocity truth that follows a Lissajous curve under noisy input.
pub fn lissajous_cv_config(spec: &LissajousSpec, period: f64, accel_noise_var: f64, seed: u64) -> Result<CvTruthConfig> {
    Ok(CvTruthConfig {
        period,
        accel_input: lissajous_accel_schedule(spec, period)?,
        accel_noise_cov: DMatrix::identity(2, 2) * accel_noise_var,
        initial_position: spec.position(0.0),
        initial_velocity: spec.velocity(0.0),
        horizon: spec.steps(period),
        seed,
    })
}

/// Smooth 3-D curve `s_i(t) = c_i + A_i sin(ω_i t + φ_i)`, e.g. a figure-eight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidalCurve {
    pub center: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// Angular frequencies in rad/s.
    pub frequency: Vec<f64>,
    pub phase: Vec<f64>,
    pub duration: f64,
}

impl SinusoidalCurve {
    /// Figure-eight of 1.5 m × 1 m at 1.2 m height with a gentle vertical
    /// oscillation; one lap takes `period` seconds.
    pub fn figure_eight(period: f64, duration: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI / period;
        Self {
            center: vec![0.0, 0.0, 1.2],
            amplitude: vec![1.5, 1.0, 0.3],
            frequency: vec![w, 2.0 * w, w],
            phase: vec![0.0, 0.0, std::f64::consts::FRAC_PI_2],
            duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.center.len();
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.amplitude.len() != d || self.frequency.len() != d || self.phase.len() != d {
            return Err(Error::DimensionMismatch("curve parameter lengths differ".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidConfig("curve duration must be > 0".into()));
        }
        Ok(())
    }

    fn eval(&self, t: f64, f: impl Fn(f64, f64, f64) -> f64) -> DVector<f64> {
        DVector::from_fn(self.center.len(), |i, _| f(self.amplitude[i], self.frequency[i], self.frequency[i] * t + self.phase[i]))
    }
}

impl Trajectory for SinusoidalCurve {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn span(&self) -> (f64, f64) {
        (0.0, self.duration)
    }

    fn position(&self, t: f64) -> Result<DVector<f64>> {
        check_span(t, self.span())?;
        Ok(DVector::from_column_slice(&self.center) + self.eval(t, |a, _, x| a * x.sin()))
    }

    fn velocity(&self, t: f64) -> Result<DVector<f64>> {
        check_span(t, self.span())?;
        Ok(self.eval(t, |a, w, x| a * w * x.cos()))
    }

    fn acceleration(&self, t: f64) -> Result<DVector<f64>> {
        check_span(t, self.span())?;
        Ok(self.eval(t, |a, w, x| -a * w * w * x.sin()))
    }
}
