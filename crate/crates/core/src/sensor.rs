//! Sensing functions `b` mapping interpolated kinematics to measurements, and
//! the measurement records that feed the filter.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spline::KinematicOrder;
use crate::tris::RcpState;

/// Norms below this make range Jacobians undefined.
pub const GEOMETRY_EPS: f64 = 1e-12;

/// Measurement modality tag as it appears in stream files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Gps,
    Toa,
    Tdoa,
    Acc,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Gps, Modality::Toa, Modality::Tdoa, Modality::Acc];

    pub fn token(&self) -> &'static str {
        match self {
            Modality::Gps => "gps",
            Modality::Toa => "toa",
            Modality::Tdoa => "tdoa",
            Modality::Acc => "acc",
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Modality::Toa | Modality::Tdoa)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| format!("unknown modality token {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorIds {
    None,
    One(u32),
    Pair(u32, u32),
}

/// A timestamped sensor reading.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub t: f64,
    pub modality: Modality,
    pub value: DVector<f64>,
    pub anchors: AnchorIds,
    pub seq: u64,
}

impl MeasurementRecord {
    /// Validates finiteness and the value/anchor shape implied by the modality.
    pub fn new(
        t: f64,
        modality: Modality,
        value: DVector<f64>,
        anchors: AnchorIds,
        seq: u64,
    ) -> Result<Self> {
        if !t.is_finite() || value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(t));
        }
        match (modality, anchors) {
            (Modality::Toa, AnchorIds::One(_)) | (Modality::Tdoa, AnchorIds::Pair(..)) => {
                if value.len() != 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "{modality} measurement must be scalar"
                    )));
                }
            }
            (Modality::Gps | Modality::Acc, AnchorIds::None) => {
                if value.is_empty() {
                    return Err(Error::InvalidDimension(0));
                }
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "anchor ids {anchors:?} do not fit modality {modality}"
                )))
            }
        }
        Ok(Self { t, modality, value, anchors, seq })
    }
}

/// Anchor coordinates indexed by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorRegistry {
    anchors: BTreeMap<u32, DVector<f64>>,
}

impl AnchorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u32, position: DVector<f64>) {
        self.anchors.insert(id, position);
    }

    pub fn get(&self, id: u32) -> Result<&DVector<f64>> {
        self.anchors.get(&id).ok_or(Error::UnknownAnchor(id))
    }

    pub fn ids(&self) -> Vec<u32> {
        self.anchors.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &DVector<f64>)> {
        self.anchors.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

impl FromIterator<(u32, DVector<f64>)> for AnchorRegistry {
    fn from_iter<I: IntoIterator<Item = (u32, DVector<f64>)>>(iter: I) -> Self {
        Self { anchors: iter.into_iter().collect() }
    }
}

/// User-supplied sensing function for modalities beyond the built-in ones.
pub trait SensingFunction: fmt::Debug + Send + Sync {
    fn order(&self) -> KinematicOrder;
    fn eval(&self, s: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, s: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Clone, Debug)]
pub enum Sensing {
    LinearPosition,
    Accelerometer,
    Toa { anchor: DVector<f64>, id: u32 },
    Tdoa { anchor_i: DVector<f64>, anchor_j: DVector<f64>, ids: (u32, u32) },
    Custom(Arc<dyn SensingFunction>),
}

/// Sensing function, its kinematic order and the noise covariance `R`.
#[derive(Clone, Debug)]
pub struct SensorModel {
    pub sensing: Sensing,
    pub noise_cov: DMatrix<f64>,
}

impl SensorModel {
    pub fn linear_position(noise_cov: DMatrix<f64>) -> Result<Self> {
        Self::checked(Sensing::LinearPosition, noise_cov)
    }

    pub fn accelerometer(noise_cov: DMatrix<f64>) -> Result<Self> {
        Self::checked(Sensing::Accelerometer, noise_cov)
    }

    pub fn toa(anchor: DVector<f64>, id: u32, variance: f64) -> Result<Self> {
        Self::checked(Sensing::Toa { anchor, id }, DMatrix::from_element(1, 1, variance))
    }

    pub fn tdoa(
        anchor_i: DVector<f64>,
        anchor_j: DVector<f64>,
        ids: (u32, u32),
        variance: f64,
    ) -> Result<Self> {
        if anchor_i.len() != anchor_j.len() {
            return Err(Error::DimensionMismatch("anchor dimensions differ".into()));
        }
        Self::checked(
            Sensing::Tdoa { anchor_i, anchor_j, ids },
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn custom(f: Arc<dyn SensingFunction>, noise_cov: DMatrix<f64>) -> Result<Self> {
        Self::checked(Sensing::Custom(f), noise_cov)
    }

    fn checked(sensing: Sensing, noise_cov: DMatrix<f64>) -> Result<Self> {
        linalg::check_psd(&noise_cov, "measurement noise")?;
        let scalar = matches!(sensing, Sensing::Toa { .. } | Sensing::Tdoa { .. });
        if scalar && noise_cov.nrows() != 1 {
            return Err(Error::DimensionMismatch("range noise must be scalar".into()));
        }
        Ok(Self { sensing, noise_cov })
    }

    pub fn kinematic_order(&self) -> KinematicOrder {
        match &self.sensing {
            Sensing::Accelerometer => KinematicOrder::Acceleration,
            Sensing::Custom(f) => f.order(),
            _ => KinematicOrder::Position,
        }
    }

    /// `b(s)`
    pub fn sense(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(s)?;
        match &self.sensing {
            Sensing::LinearPosition | Sensing::Accelerometer => Ok(s.clone()),
            Sensing::Toa { anchor, id } => {
                let r = range(s, anchor, *id)?;
                Ok(DVector::from_element(1, r))
            }
            Sensing::Tdoa { anchor_i, anchor_j, ids } => {
                let ri = range(s, anchor_i, ids.0)?;
                let rj = range(s, anchor_j, ids.1)?;
                Ok(DVector::from_element(1, ri - rj))
            }
            Sensing::Custom(f) => f.eval(s),
        }
    }

    fn check_dim(&self, s: &DVector<f64>) -> Result<()> {
        let anchor_dim = match &self.sensing {
            Sensing::Toa { anchor, .. } => Some(anchor.len()),
            Sensing::Tdoa { anchor_i, .. } => Some(anchor_i.len()),
            Sensing::LinearPosition | Sensing::Accelerometer => Some(self.noise_cov.nrows()),
            Sensing::Custom(_) => None,
        };
        match anchor_dim {
            Some(n) if n != s.len() => Err(Error::DimensionMismatch(format!(
                "sensor expects a {n}-vector, got {}",
                s.len()
            ))),
            _ => Ok(()),
        }
    }
}

fn range(s: &DVector<f64>, anchor: &DVector<f64>, id: u32) -> Result<f64> {
    let r = (s - anchor).norm();
    if r < GEOMETRY_EPS {
        return Err(Error::AnchorCoincidesWithPosition { anchor: id as usize });
    }
    Ok(r)
}

fn unit_row(s: &DVector<f64>, anchor: &DVector<f64>) -> Result<DMatrix<f64>> {
    let diff = s - anchor;
    let r = diff.norm();
    if r < GEOMETRY_EPS {
        return Err(Error::SingularGeometry(r));
    }
    Ok(DMatrix::from_row_slice(1, diff.len(), (diff / r).as_slice()))
}

/// `J_b` evaluated at the interpolated kinematic quantity.
pub fn sensing_jacobian(model: &SensorModel, interpolated: &DVector<f64>) -> Result<DMatrix<f64>> {
    model.check_dim(interpolated)?;
    match &model.sensing {
        Sensing::LinearPosition | Sensing::Accelerometer => {
            Ok(DMatrix::identity(interpolated.len(), interpolated.len()))
        }
        Sensing::Toa { anchor, .. } => unit_row(interpolated, anchor),
        Sensing::Tdoa { anchor_i, anchor_j, .. } => {
            Ok(unit_row(interpolated, anchor_i)? - unit_row(interpolated, anchor_j)?)
        }
        Sensing::Custom(f) => f.jacobian(interpolated),
    }
}

/// `h(x) = b(s̊(t_z; x))`
pub fn predict_measurement(model: &SensorModel, state: &RcpState, t_z: f64) -> Result<DVector<f64>> {
    let s = state.interpolate(t_z, model.kinematic_order())?;
    model.sense(&s)
}

/// Builds per-record sensor models from anchor tables and per-modality noise.
#[derive(Clone, Debug, Default)]
pub struct SensorSuite {
    pub anchors: AnchorRegistry,
    pub gps_cov: Option<DMatrix<f64>>,
    pub acc_cov: Option<DMatrix<f64>>,
    pub toa_var: Option<f64>,
    pub tdoa_var: Option<f64>,
}

impl SensorSuite {
    pub fn model_for(&self, record: &MeasurementRecord) -> Result<SensorModel> {
        let missing = || Error::InvalidConfig(format!("no sensor model for {}", record.modality));
        match (record.modality, record.anchors) {
            (Modality::Gps, _) => {
                SensorModel::linear_position(self.gps_cov.clone().ok_or_else(missing)?)
            }
            (Modality::Acc, _) => SensorModel::accelerometer(self.acc_cov.clone().ok_or_else(missing)?),
            (Modality::Toa, AnchorIds::One(id)) => {
                SensorModel::toa(self.anchors.get(id)?.clone(), id, self.toa_var.ok_or_else(missing)?)
            }
            (Modality::Tdoa, AnchorIds::Pair(i, j)) => SensorModel::tdoa(
                self.anchors.get(i)?.clone(),
                self.anchors.get(j)?.clone(),
                (i, j),
                self.tdoa_var.ok_or_else(missing)?,
            ),
            (m, a) => Err(Error::InvalidConfig(format!("anchor ids {a:?} do not fit modality {m}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::KnotGrid;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn constant_state(c: &[f64]) -> RcpState {
        let d = c.len();
        let mean = DVector::from_iterator(4 * d, (0..4).flat_map(|_| c.iter().copied()));
        let grid = KnotGrid::new(0.0, 1.0, 4).unwrap();
        RcpState::new(mean, DMatrix::identity(4 * d, 4 * d), grid).unwrap()
    }

    #[test]
    fn linear_position_returns_constant() {
        let s = constant_state(&[1.0, 2.0]);
        let m = SensorModel::linear_position(DMatrix::identity(2, 2)).unwrap();
        let z = predict_measurement(&m, &s, 2.5).unwrap();
        assert!((z - v(&[1.0, 2.0])).norm() < 1e-15);
    }

    #[test]
    fn toa_range() {
        let s = constant_state(&[3.0, 4.0, 0.0]);
        let m = SensorModel::toa(v(&[0.0, 0.0, 0.0]), 0, 0.01).unwrap();
        let z = predict_measurement(&m, &s, 3.0).unwrap();
        assert!((z[0] - 5.0).abs() < 1e-14);
        let j = sensing_jacobian(&m, &v(&[3.0, 4.0, 0.0])).unwrap();
        assert!((j - DMatrix::from_row_slice(1, 3, &[0.6, 0.8, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn tdoa_symmetric_point_is_zero() {
        let s = constant_state(&[0.0, 1.0, 2.0]);
        let m = SensorModel::tdoa(v(&[-1.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0]), (0, 1), 0.05).unwrap();
        let z = predict_measurement(&m, &s, 2.2).unwrap();
        assert!(z[0].abs() < 1e-15);
    }

    #[test]
    fn coincident_anchor_errors() {
        let s = constant_state(&[1.0, 1.0, 1.0]);
        let m = SensorModel::toa(v(&[1.0, 1.0, 1.0]), 7, 0.01).unwrap();
        assert!(matches!(
            predict_measurement(&m, &s, 3.0),
            Err(Error::AnchorCoincidesWithPosition { anchor: 7 })
        ));
        assert!(matches!(
            sensing_jacobian(&m, &v(&[1.0, 1.0, 1.0])),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn identity_jacobians() {
        let m = SensorModel::accelerometer(DMatrix::identity(3, 3) * 0.01).unwrap();
        assert_eq!(m.kinematic_order(), KinematicOrder::Acceleration);
        assert_eq!(sensing_jacobian(&m, &v(&[1.0, 2.0, 3.0])).unwrap(), DMatrix::identity(3, 3));
        let m = SensorModel::linear_position(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(sensing_jacobian(&m, &v(&[1.0, 2.0])).unwrap(), DMatrix::identity(2, 2));
        assert!(sensing_jacobian(&m, &v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn records_are_validated() {
        assert!(MeasurementRecord::new(0.0, Modality::Toa, v(&[1.0]), AnchorIds::One(1), 0).is_ok());
        assert!(MeasurementRecord::new(0.0, Modality::Toa, v(&[1.0, 2.0]), AnchorIds::One(1), 0).is_err());
        assert!(MeasurementRecord::new(0.0, Modality::Tdoa, v(&[1.0]), AnchorIds::One(1), 0).is_err());
        assert!(matches!(
            MeasurementRecord::new(f64::NAN, Modality::Gps, v(&[1.0]), AnchorIds::None, 0),
            Err(Error::NonFinite(_))
        ));
        assert!(MeasurementRecord::new(0.0, Modality::Gps, v(&[f64::INFINITY]), AnchorIds::None, 0).is_err());
    }

    #[test]
    fn modality_tokens_round_trip() {
        for m in Modality::ALL {
            assert_eq!(m.token().parse::<Modality>().unwrap(), m);
        }
        assert!("lidar".parse::<Modality>().is_err());
    }

    #[test]
    fn suite_resolves_anchor_ids() {
        let suite = SensorSuite {
            anchors: [(3, v(&[0.0, 0.0, 0.0])), (4, v(&[1.0, 0.0, 0.0]))].into_iter().collect(),
            tdoa_var: Some(0.05),
            ..Default::default()
        };
        let rec = MeasurementRecord::new(0.0, Modality::Tdoa, v(&[0.1]), AnchorIds::Pair(3, 4), 0).unwrap();
        let m = suite.model_for(&rec).unwrap();
        assert!(matches!(m.sensing, Sensing::Tdoa { ids: (3, 4), .. }));
        let rec = MeasurementRecord::new(0.0, Modality::Tdoa, v(&[0.1]), AnchorIds::Pair(3, 9), 0).unwrap();
        assert!(matches!(suite.model_for(&rec), Err(Error::UnknownAnchor(9))));
        let rec = MeasurementRecord::new(0.0, Modality::Gps, v(&[0.1]), AnchorIds::None, 0).unwrap();
        assert!(suite.model_for(&rec).is_err());
    }
}
