//! Spline-state-space model: the recurrent-control-point state, its
//! transition matrix and process noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spline::{
    write_coefficients, KinematicOrder, KnotGrid, NormalizedTime, SegmentControlPoints, KNOT_SNAP,
};

/// The four most recent control points `[c_{n-3}; c_{n-2}; c_{n-1}; c_n]`
/// with their joint covariance. The terminal segment is `(t_{n-1}, t_n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RcpState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub grid: KnotGrid,
}

impl RcpState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, grid: KnotGrid) -> Result<Self> {
        if mean.is_empty() || !mean.len().is_multiple_of(4) {
            return Err(Error::DimensionMismatch(format!(
                "state length {} is not a positive multiple of 4",
                mean.len()
            )));
        }
        if covariance.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch(format!(
                "covariance shape {:?} does not match state length {}",
                covariance.shape(),
                mean.len()
            )));
        }
        linalg::check_psd(&covariance, "state covariance")?;
        Ok(Self { mean, covariance, grid })
    }

    pub fn dim(&self) -> usize {
        self.mean.len() / 4
    }

    pub fn n_knots(&self) -> usize {
        self.grid.n_knots
    }

    /// Control point `j ∈ 0..4` of the window, oldest first.
    pub fn block(&self, j: usize) -> DVector<f64> {
        let d = self.dim();
        self.mean.rows(j * d, d).into_owned()
    }

    pub fn control_points(&self) -> SegmentControlPoints {
        SegmentControlPoints::from_stacked(&self.mean, self.dim())
            .expect("state length validated at construction")
    }

    /// `(t_{n-1}, t_n)`
    pub fn terminal_segment(&self) -> (f64, f64) {
        let n = self.grid.n_knots as i64;
        (self.grid.knot(n - 1), self.grid.knot(n))
    }

    /// Normalized time of `t` in the terminal segment. The left knot `t_{n-1}`
    /// is admitted with `u = 0`: the window's first three control points fully
    /// determine the spline there.
    pub fn normalized_time(&self, t: f64) -> Result<NormalizedTime> {
        let (start, end) = self.terminal_segment();
        let tau = self.grid.tau;
        let r = (t - start) / tau;
        let u = if (r - 1.0).abs() <= KNOT_SNAP {
            1.0
        } else if r.abs() <= KNOT_SNAP {
            0.0
        } else if r > 0.0 && r < 1.0 {
            r
        } else {
            return Err(Error::OutOfSegment { t, start, end });
        };
        Ok(NormalizedTime::from_unit(u, tau))
    }

    /// `Λ̊_t` for a timestamp in the terminal segment.
    pub fn coefficients(&self, t: f64, order: KinematicOrder) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let nt = self.normalized_time(t)?;
        let mut lambda = DMatrix::zeros(d, 4 * d);
        write_coefficients(&mut lambda, 0, &nt.weights(order), d);
        Ok(lambda)
    }

    /// Mean kinematics at `t`.
    pub fn interpolate(&self, t: f64, order: KinematicOrder) -> Result<DVector<f64>> {
        let nt = self.normalized_time(t)?;
        Ok(weighted_blocks(&self.mean, self.dim(), &nt.weights(order)))
    }
}

pub(crate) fn weighted_blocks(x: &DVector<f64>, d: usize, w: &[f64; 4]) -> DVector<f64> {
    let mut out = DVector::zeros(d);
    for (j, weight) in w.iter().enumerate() {
        out.axpy(*weight, &x.rows(j * d, d), 1.0);
    }
    out
}

/// Process noise `Q = (ω I_{3d}) ⊕ (ν I_d)`, or a full override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessNoiseSpec {
    pub omega_retained: f64,
    pub nu_new: f64,
    #[serde(skip)]
    pub full: Option<DMatrix<f64>>,
}

impl ProcessNoiseSpec {
    pub fn new(omega_retained: f64, nu_new: f64) -> Self {
        Self { omega_retained, nu_new, full: None }
    }

    pub fn full(matrix: DMatrix<f64>) -> Self {
        Self { omega_retained: f64::NAN, nu_new: f64::NAN, full: Some(matrix) }
    }
}

pub fn build_process_noise(spec: &ProcessNoiseSpec, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if let Some(full) = &spec.full {
        if full.shape() != (4 * d, 4 * d) {
            return Err(Error::DimensionMismatch(format!(
                "process noise override is {:?}, expected {}x{}",
                full.shape(),
                4 * d,
                4 * d
            )));
        }
        linalg::check_psd(full, "process noise")?;
        return Ok(full.clone());
    }
    for v in [spec.omega_retained, spec.nu_new] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NegativeVariance(v));
        }
    }
    if spec.omega_retained > spec.nu_new {
        log::warn!(
            "retained-point noise {} exceeds new-point noise {}",
            spec.omega_retained,
            spec.nu_new
        );
    }
    Ok(DMatrix::from_fn(4 * d, 4 * d, |r, c| match (r == c, r < 3 * d) {
        (true, true) => spec.omega_retained,
        (true, false) => spec.nu_new,
        _ => 0.0,
    }))
}

/// `A = [[0,I,0,0],[0,0,I,0],[0,0,0,I],[-I,0,2I,0]]`: keep the three newest
/// points and append `c_{n+1} = 2c_{n-1} - c_{n-3}`, which preserves the
/// velocity at `t_{n-1}` at the new knot `t_{n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    a: DMatrix<f64>,
    d: usize,
}

impl TransitionMatrix {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut a = DMatrix::zeros(4 * d, 4 * d);
        for k in 0..d {
            for j in 0..3 {
                a[(j * d + k, (j + 1) * d + k)] = 1.0;
            }
            a[(3 * d + k, k)] = -1.0;
            a[(3 * d + k, 2 * d + k)] = 2.0;
        }
        Ok(Self { a, d })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `A x`, evaluated blockwise.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.d;
        let mut out = DVector::zeros(4 * d);
        out.rows_mut(0, 3 * d).copy_from(&x.rows(d, 3 * d));
        for k in 0..d {
            out[3 * d + k] = 2.0 * x[2 * d + k] - x[k];
        }
        out
    }

    /// `A P Aᵀ`
    pub fn propagate_covariance(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * p * self.a.transpose()
    }
}

pub fn build_transition(d: usize) -> Result<TransitionMatrix> {
    TransitionMatrix::new(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_scalar_example() {
        let a = build_transition(1).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.apply(&x).as_slice(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!((a.matrix() * &x).as_slice(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn constant_spline_is_fixed_point() {
        let a = build_transition(3).unwrap();
        let c = [0.3, -1.0, 7.5];
        let x = DVector::from_iterator(12, (0..4).flat_map(|_| c));
        assert_eq!(a.apply(&x), x);
    }

    #[test]
    fn collinear_points_continue_line() {
        let a = build_transition(2).unwrap();
        let base = [1.0, -2.0];
        let step = [0.5, 0.25];
        let x = DVector::from_iterator(
            8,
            (0..4).flat_map(|j| [base[0] + j as f64 * step[0], base[1] + j as f64 * step[1]]),
        );
        let y = a.apply(&x);
        // 2(a + 2b) − a = a + 4b
        assert!((y[6] - (base[0] + 4.0 * step[0])).abs() < 1e-15);
        assert!((y[7] - (base[1] + 4.0 * step[1])).abs() < 1e-15);
    }

    #[test]
    fn process_noise_case_study_values() {
        let q = build_process_noise(&ProcessNoiseSpec::new(0.02, 0.1), 2).unwrap();
        for i in 0..8 {
            assert_eq!(q[(i, i)], if i < 6 { 0.02 } else { 0.1 });
        }
        assert_eq!(q.iter().filter(|v| **v != 0.0).count(), 8);

        let q = build_process_noise(&ProcessNoiseSpec::new(0.02e-5, 1e-2), 3).unwrap();
        assert_eq!(q.shape(), (12, 12));
        assert_eq!(q[(8, 8)], 0.02e-5);
        assert_eq!(q[(9, 9)], 1e-2);

        let q = build_process_noise(&ProcessNoiseSpec::new(0.3, 0.3), 2).unwrap();
        assert_eq!(q, DMatrix::identity(8, 8) * 0.3);
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(matches!(
            build_process_noise(&ProcessNoiseSpec::new(-0.1, 1.0), 2),
            Err(Error::NegativeVariance(_))
        ));
    }

    #[test]
    fn full_override_is_checked() {
        let full = crate::linalg::direct_sum(
            &(DMatrix::identity(6, 6) * 0.5),
            &DMatrix::identity(2, 2),
        );
        let q = build_process_noise(&ProcessNoiseSpec::full(full.clone()), 2).unwrap();
        assert_eq!(q, full);
        assert!(build_process_noise(&ProcessNoiseSpec::full(full), 3).is_err());
    }

    #[test]
    fn state_accepts_left_knot_only_in_terminal_segment() {
        let grid = KnotGrid::new(-2.0, 1.0, 4).unwrap();
        let s = RcpState::new(DVector::zeros(8), DMatrix::identity(8, 8), grid).unwrap();
        assert_eq!(s.terminal_segment(), (0.0, 1.0));
        assert_eq!(s.normalized_time(0.0).unwrap().u(), 0.0);
        assert_eq!(s.normalized_time(1.0).unwrap().u(), 1.0);
        assert!(s.normalized_time(1.5).is_err());
        assert!(s.normalized_time(-0.5).is_err());
    }

    #[test]
    fn state_validation() {
        let grid = KnotGrid::new(0.0, 1.0, 4).unwrap();
        assert!(RcpState::new(DVector::zeros(6), DMatrix::identity(6, 6), grid).is_err());
        let mut bad = DMatrix::identity(8, 8);
        bad[(0, 1)] = 0.5;
        assert!(RcpState::new(DVector::zeros(8), bad, grid).is_err());
        let neg = DMatrix::identity(8, 8) * -1.0;
        assert!(RcpState::new(DVector::zeros(8), neg, grid).is_err());
    }
}
