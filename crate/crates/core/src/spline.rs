//! Uniform cubic B-spline kinematics.
//!
//! A segment `(t_i, t_{i+1}]` is governed by the four control points
//! `c_{i-2}, c_{i-1}, c_i, c_{i+1}`. Position, velocity and acceleration at a
//! timestamp are all linear in those points: `s(t) = C_i Ω u_t`, where `u_t`
//! holds the powers of the normalized time (or their derivatives). Stacking the
//! control points as `vec(C_i)` turns the same map into a `d × 4d` coefficient
//! matrix `(Ω u_t)ᵀ ⊗ I_d`, which is what the filter linearizes against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance (in units of τ) below which a timestamp is treated as
/// lying exactly on a knot.
pub const KNOT_SNAP: f64 = 1e-9;

/// Basis matrix Ω of the uniform cubic B-spline. Row `r` gives the weight of
/// control point `r` as a polynomial in `u`.
pub const BASIS: [[f64; 4]; 4] = [
    [1.0 / 6.0, -3.0 / 6.0, 3.0 / 6.0, -1.0 / 6.0],
    [4.0 / 6.0, 0.0, -6.0 / 6.0, 3.0 / 6.0],
    [1.0 / 6.0, 3.0 / 6.0, 3.0 / 6.0, -3.0 / 6.0],
    [0.0, 0.0, 0.0, 1.0 / 6.0],
];

pub fn basis_matrix() -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |r, c| BASIS[r][c])
}

/// Which time derivative of the spline a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KinematicOrder {
    Position = 0,
    Velocity = 1,
    Acceleration = 2,
}

impl TryFrom<u8> for KinematicOrder {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Self::Position),
            1 => Ok(Self::Velocity),
            2 => Ok(Self::Acceleration),
            other => Err(Error::InvalidConfig(format!(
                "kinematic order {other} not supported by a cubic spline"
            ))),
        }
    }
}

/// Uniform knot lattice. Knot `i` (1-based) sits at `t_origin + (i-1)·tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    pub t_origin: f64,
    pub tau: f64,
    pub n_knots: usize,
}

impl KnotGrid {
    pub fn new(t_origin: f64, tau: f64, n_knots: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("knot interval must be > 0, got {tau}")));
        }
        if !t_origin.is_finite() {
            return Err(Error::InvalidConfig("knot origin must be finite".into()));
        }
        if n_knots < 4 {
            return Err(Error::InvalidConfig(format!(
                "a cubic spline needs at least 4 knots, got {n_knots}"
            )));
        }
        Ok(Self { t_origin, tau, n_knots })
    }

    /// Timestamp of knot `i` (1-based). Computed from the index, never accumulated.
    pub fn knot(&self, i: i64) -> f64 {
        self.t_origin + (i - 1) as f64 * self.tau
    }

    /// The last knot currently placed, `t_{n}`.
    pub fn last_knot(&self) -> f64 {
        self.knot(self.n_knots as i64)
    }

    /// Index `i` of the segment `(t_i, t_{i+1}]` containing `t`. A timestamp on
    /// a knot belongs to the segment on its left.
    pub fn segment_containing(&self, t: f64) -> i64 {
        let r = (t - self.t_origin) / self.tau;
        let nearest = r.round();
        if (r - nearest).abs() <= KNOT_SNAP {
            nearest as i64
        } else {
            r.floor() as i64 + 1
        }
    }

    /// Adds one knot at the end of the lattice.
    pub fn extended(&self) -> Self {
        Self { n_knots: self.n_knots + 1, ..*self }
    }
}

/// Normalized time `u ∈ [0, 1]` within a segment of length `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedTime {
    u: f64,
    tau: f64,
}

impl NormalizedTime {
    /// Internal constructor. Accepts the closed interval so that the left
    /// knot of a segment can be evaluated during initialization.
    pub(crate) fn from_unit(u: f64, tau: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&u) && tau > 0.0);
        Self { u, tau }
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `[1, u, u², u³]`
    pub fn position_powers(&self) -> [f64; 4] {
        let u = self.u;
        [1.0, u, u * u, u * u * u]
    }

    /// `[0, 1, 2u, 3u²] / τ`
    pub fn velocity_powers(&self) -> [f64; 4] {
        let u = self.u;
        let s = 1.0 / self.tau;
        [0.0, s, 2.0 * u * s, 3.0 * u * u * s]
    }

    /// `[0, 0, 2, 6u] / τ²`
    pub fn acceleration_powers(&self) -> [f64; 4] {
        let s = 1.0 / (self.tau * self.tau);
        [0.0, 0.0, 2.0 * s, 6.0 * self.u * s]
    }

    pub fn powers(&self, order: KinematicOrder) -> [f64; 4] {
        match order {
            KinematicOrder::Position => self.position_powers(),
            KinematicOrder::Velocity => self.velocity_powers(),
            KinematicOrder::Acceleration => self.acceleration_powers(),
        }
    }

    /// Control-point weights `Ω · ů_t`.
    pub fn weights(&self, order: KinematicOrder) -> [f64; 4] {
        let p = self.powers(order);
        let mut w = [0.0; 4];
        for (r, row) in BASIS.iter().enumerate() {
            w[r] = row.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
        }
        w
    }
}

/// Normalized time of `t` within segment `(t_i, t_i + τ]`.
pub fn normalized_time(grid: &KnotGrid, t: f64, segment_index: i64) -> Result<NormalizedTime> {
    let start = grid.knot(segment_index);
    let r = (t - start) / grid.tau;
    let out_of_segment = || Error::OutOfSegment { t, start, end: start + grid.tau };
    if !r.is_finite() {
        return Err(out_of_segment());
    }
    if (r - 1.0).abs() <= KNOT_SNAP {
        return Ok(NormalizedTime::from_unit(1.0, grid.tau));
    }
    if r <= KNOT_SNAP || r > 1.0 {
        return Err(out_of_segment());
    }
    Ok(NormalizedTime::from_unit(r, grid.tau))
}

/// The four control points governing one segment, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentControlPoints {
    points: [DVector<f64>; 4],
}

impl SegmentControlPoints {
    pub fn new(points: [DVector<f64>; 4]) -> Result<Self> {
        let d = points[0].len();
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch(
                "control points of one segment must share a dimension".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Splits a stacked `4d` vector `[c₁ᵀ, c₂ᵀ, c₃ᵀ, c₄ᵀ]ᵀ`.
    pub fn from_stacked(x: &DVector<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if x.len() != 4 * d {
            return Err(Error::DimensionMismatch(format!(
                "stacked control points have length {}, expected {}",
                x.len(),
                4 * d
            )));
        }
        let block = |j: usize| x.rows(j * d, d).into_owned();
        Self::new([block(0), block(1), block(2), block(3)])
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>; 4] {
        &self.points
    }

    /// `vec(C)`
    pub fn stacked(&self) -> DVector<f64> {
        let d = self.dim();
        DVector::from_iterator(4 * d, self.points.iter().flat_map(|p| p.iter().copied()))
    }
}

/// Evaluates `C Ω ů_t` for the requested derivative order.
pub fn interpolate(
    segment: &SegmentControlPoints,
    nt: &NormalizedTime,
    order: KinematicOrder,
) -> DVector<f64> {
    let w = nt.weights(order);
    let mut out = DVector::zeros(segment.dim());
    for (weight, point) in w.iter().zip(segment.points.iter()) {
        out.axpy(*weight, point, 1.0);
    }
    out
}

/// `Λ̊_t = (Ω ů_t)ᵀ ⊗ I_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    pub lambda: DMatrix<f64>,
    pub order: KinematicOrder,
    pub t_query: Option<f64>,
}

pub fn coefficient_matrix(
    nt: &NormalizedTime,
    order: KinematicOrder,
    d: usize,
) -> Result<CoefficientMatrix> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut lambda = DMatrix::zeros(d, 4 * d);
    write_coefficients(&mut lambda, 0, &nt.weights(order), d);
    Ok(CoefficientMatrix { lambda, order, t_query: None })
}

pub(crate) fn write_coefficients(target: &mut DMatrix<f64>, row: usize, w: &[f64; 4], d: usize) {
    for (j, weight) in w.iter().enumerate() {
        for k in 0..d {
            target[(row + k, j * d + k)] = *weight;
        }
    }
}

/// Stacks coefficient matrices for several queries inside one segment into a
/// `(d·m) × 4d` matrix, in query order.
pub fn batch_coefficient_matrix(
    queries: &[(f64, KinematicOrder)],
    grid: &KnotGrid,
    segment_index: i64,
    d: usize,
) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut out = DMatrix::zeros(d * queries.len(), 4 * d);
    for (q, (t, order)) in queries.iter().enumerate() {
        let nt = normalized_time(grid, *t, segment_index)?;
        write_coefficients(&mut out, q * d, &nt.weights(*order), d);
    }
    Ok(out)
}
