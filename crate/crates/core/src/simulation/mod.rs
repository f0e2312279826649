//! Synthetic ground truth and measurement streams.
//!
//! Randomness comes from ChaCha8 generators seeded with the scenario seed.
//! Each consumer draws from its own stream of that seed: stream 0 drives the
//! truth process noise and stream `1 + i` drives modality `i` in the order
//! `gps, toa, tdoa, acc`. Adding or removing one modality therefore leaves
//! the samples of the others unchanged.

mod measurements;
mod truth;

pub use measurements::{
    sample_measurements, AnchorSpec, CovSpec, NoiseConfig, OffsetDistribution, OutlierEvent, OutlierModel,
    SampledStream, ScenarioConfig, Schedule, Schedules,
};
pub use truth::{
    lissajous_accel_schedule, lissajous_cv_config, simulate_cv_truth, CvTruthConfig, LissajousPreset,
    LissajousSpec, SinusoidalCurve, Trajectory, TruthSample, TruthTrajectory,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) const TRUTH_STREAM: u64 = 0;

pub(crate) fn modality_stream(m: crate::sensor::Modality) -> u64 {
    1 + crate::sensor::Modality::ALL.iter().position(|x| *x == m).unwrap_or(0) as u64
}

/// Draws from `N(0, Σ)` through a symmetric square root of a PSD `Σ`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        crate::linalg::check_psd(cov, "noise covariance")?;
        let eig = cov.clone().symmetric_eigen();
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose();
        Ok(Self { root })
    }

    pub fn dim(&self) -> usize {
        self.root.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.root.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.root * z
    }
}

/// `start + k / rate` for every `k` with the timestamp inside `span`.
pub fn rate_schedule(span: (f64, f64), rate_hz: f64) -> Result<Vec<f64>> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!("rate must be > 0, got {rate_hz}")));
    }
    let (start, end) = span;
    if end < start {
        return Ok(Vec::new());
    }
    let count = ((end - start) * rate_hz + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 / rate_hz).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_schedule_counts() {
        let t = rate_schedule((0.0, 60.0), 200.0).unwrap();
        assert_eq!(t.len(), 12001);
        assert_eq!(t[1], 0.005);
        assert_eq!(*t.last().unwrap(), 60.0);
        assert_eq!(rate_schedule((0.0, 0.0), 100.0).unwrap(), vec![0.0]);
        assert!(rate_schedule((0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn sampler_reproduces_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let sampler = GaussianSampler::new(&cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).amax() < 0.05);
    }

    #[test]
    fn sampler_accepts_singular_covariance() {
        let sampler = GaussianSampler::new(&DMatrix::zeros(3, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sampler.sample(&mut rng), DVector::zeros(3));
    }
}
