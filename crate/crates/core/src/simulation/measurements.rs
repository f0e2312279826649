//! Measurement synthesis over a truth trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{modality_stream, rate_schedule, GaussianSampler, Trajectory};
use crate::error::{Error, Result};
use crate::sensor::{AnchorIds, AnchorRegistry, MeasurementRecord, Modality, SensorSuite};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub id: u32,
    pub position: Vec<f64>,
}

/// Sampling times of one modality: a fixed rate over `[start, end]`
/// (defaulting to the truth span) or an explicit list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub rate_hz: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub end: Option<f64>,
}

impl Schedule {
    pub fn rate(rate_hz: f64) -> Self {
        Self { rate_hz: Some(rate_hz), ..Self::default() }
    }

    pub fn times(&self, span: (f64, f64)) -> Result<Vec<f64>> {
        match (self.rate_hz, &self.times) {
            (Some(rate), None) => {
                let start = self.start.unwrap_or(span.0);
                let end = self.end.unwrap_or(span.1);
                rate_schedule((start, end), rate)
            }
            (None, Some(times)) => {
                let mut times = times.clone();
                if times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidConfig("schedule contains a non-finite time".into()));
                }
                times.sort_by(f64::total_cmp);
                times.dedup();
                Ok(times)
            }
            _ => Err(Error::InvalidConfig("a schedule needs exactly one of rate_hz or times".into())),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    pub gps: Option<Schedule>,
    pub toa: Option<Schedule>,
    pub tdoa: Option<Schedule>,
    pub acc: Option<Schedule>,
}

impl Schedules {
    pub fn get(&self, m: Modality) -> Option<&Schedule> {
        match m {
            Modality::Gps => self.gps.as_ref(),
            Modality::Toa => self.toa.as_ref(),
            Modality::Tdoa => self.tdoa.as_ref(),
            Modality::Acc => self.acc.as_ref(),
        }
    }
}

/// Covariance given as an isotropic variance or a full matrix (row-major rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Isotropic(f64),
    Full(Vec<Vec<f64>>),
}

impl Default for CovSpec {
    fn default() -> Self {
        CovSpec::Isotropic(0.0)
    }
}

impl CovSpec {
    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            CovSpec::Isotropic(v) => {
                if !(*v >= 0.0) {
                    return Err(Error::NegativeVariance(*v));
                }
                DMatrix::identity(d, d) * *v
            }
            CovSpec::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch(format!("covariance must be {d}x{d}")));
                }
                DMatrix::from_fn(d, d, |r, c| rows[r][c])
            }
        };
        crate::linalg::check_psd(&m, "noise covariance")?;
        Ok(m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub gps: CovSpec,
    #[serde(default)]
    pub acc: CovSpec,
    #[serde(default)]
    pub toa: f64,
    #[serde(default)]
    pub tdoa: f64,
}

/// Additive outlier offset, applied to every component of the measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OffsetDistribution {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Cauchy { scale: f64 },
}

impl Default for OffsetDistribution {
    fn default() -> Self {
        OffsetDistribution::Constant { value: 0.0 }
    }
}

impl OffsetDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            OffsetDistribution::Constant { value } => value.is_finite(),
            OffsetDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            OffsetDistribution::Cauchy { scale } => *scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid outlier offset distribution {self:?}")))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            OffsetDistribution::Constant { value } => *value,
            OffsetDistribution::Uniform { low, high } => {
                Uniform::new(*low, *high).expect("validated bounds").sample(rng)
            }
            OffsetDistribution::Cauchy { scale } => {
                Cauchy::new(0.0, *scale).expect("validated scale").sample(rng)
            }
        }
    }
}

/// Mixture contamination: with probability `probability` a measurement is
/// shifted by an offset drawn from `offset`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierModel {
    #[serde(default)]
    pub probability: f64,
    #[serde(default)]
    pub offset: OffsetDistribution,
    /// Contaminated modalities; empty means all.
    #[serde(default)]
    pub modalities: Vec<Modality>,
}

impl OutlierModel {
    fn applies_to(&self, m: Modality) -> bool {
        self.probability > 0.0 && (self.modalities.is_empty() || self.modalities.contains(&m))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub anchors: Vec<AnchorSpec>,
    #[serde(default)]
    pub schedule: Schedules,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub outliers: OutlierModel,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn anchor_registry(&self) -> AnchorRegistry {
        self.anchors.iter().map(|a| (a.id, DVector::from_column_slice(&a.position))).collect()
    }

    /// Sensor models matching the simulated noise, for a `d`-dimensional track.
    pub fn sensor_suite(&self, d: usize) -> Result<SensorSuite> {
        Ok(SensorSuite {
            anchors: self.anchor_registry(),
            gps_cov: Some(self.noise.gps.matrix(d)?),
            acc_cov: Some(self.noise.acc.matrix(d)?),
            toa_var: Some(self.noise.toa),
            tdoa_var: Some(self.noise.tdoa),
        })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let p = self.outliers.probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("outlier probability {p} outside [0, 1]")));
        }
        self.outliers.offset.validate()?;
        for a in &self.anchors {
            if a.position.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "anchor {} has dimension {}, trajectory has {d}",
                    a.id,
                    a.position.len()
                )));
            }
        }
        for v in [self.noise.toa, self.noise.tdoa] {
            if !(v >= 0.0) {
                return Err(Error::NegativeVariance(v));
            }
        }
        let needed = [(Modality::Toa, 1), (Modality::Tdoa, 2)];
        for (m, n) in needed {
            if self.schedule.get(m).is_some() && self.anchors.len() < n {
                return Err(Error::InvalidConfig(format!("{m} sampling needs at least {n} anchors")));
            }
        }
        for m in Modality::ALL {
            if let Some(Schedule { rate_hz: Some(r), .. }) = self.schedule.get(m) {
                if !(*r > 0.0) {
                    return Err(Error::InvalidConfig(format!("{m} rate must be > 0")));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth record of an injected outlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierEvent {
    pub seq: u64,
    pub t: f64,
    pub modality: Modality,
    pub offset: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledStream {
    pub records: Vec<MeasurementRecord>,
    pub outliers: Vec<OutlierEvent>,
}

struct Draft {
    t: f64,
    modality: Modality,
    value: DVector<f64>,
    anchors: AnchorIds,
    offset: Option<f64>,
}

/// Samples every scheduled modality along `truth`, adds Gaussian noise and
/// outlier contamination, and returns the merged stream sorted by time. Ties
/// are ordered by modality (`gps, toa, tdoa, acc`); sequence ids follow the
/// final order.
pub fn sample_measurements(truth: &dyn Trajectory, scenario: &ScenarioConfig) -> Result<SampledStream> {
    let d = truth.dim();
    scenario.validate(d)?;
    let span = truth.span();
    let registry = scenario.anchor_registry();
    let ids = registry.ids();

    let mut drafts = Vec::new();
    for modality in Modality::ALL {
        let Some(schedule) = scenario.schedule.get(modality) else { continue };
        let times = schedule.times(span)?;
        if let (Some(first), Some(last)) = (times.first(), times.last()) {
            for t in [*first, *last] {
                if t < span.0 - 1e-9 || t > span.1 + 1e-9 {
                    return Err(Error::ScheduleOutOfRange { t, start: span.0, end: span.1 });
                }
            }
        }
        let noise = match modality {
            Modality::Gps => GaussianSampler::new(&scenario.noise.gps.matrix(d)?)?,
            Modality::Acc => GaussianSampler::new(&scenario.noise.acc.matrix(d)?)?,
            Modality::Toa => GaussianSampler::new(&DMatrix::from_element(1, 1, scenario.noise.toa))?,
            Modality::Tdoa => GaussianSampler::new(&DMatrix::from_element(1, 1, scenario.noise.tdoa))?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(modality_stream(modality));
        let contaminate = scenario.outliers.applies_to(modality);

        for t in times {
            let (clean, anchors) = match modality {
                Modality::Gps => (truth.position(t)?, AnchorIds::None),
                Modality::Acc => (truth.acceleration(t)?, AnchorIds::None),
                Modality::Toa => {
                    let id = ids[rng.random_range(0..ids.len())];
                    let r = (truth.position(t)? - registry.get(id)?).norm();
                    (DVector::from_element(1, r), AnchorIds::One(id))
                }
                Modality::Tdoa => {
                    let i = rng.random_range(0..ids.len());
                    let j = (i + 1 + rng.random_range(0..ids.len() - 1)) % ids.len();
                    let s = truth.position(t)?;
                    let r = (&s - registry.get(ids[i])?).norm() - (&s - registry.get(ids[j])?).norm();
                    (DVector::from_element(1, r), AnchorIds::Pair(ids[i], ids[j]))
                }
            };
            let mut value = clean + noise.sample(&mut rng);
            let offset = if contaminate && rng.random::<f64>() < scenario.outliers.probability {
                let o = scenario.outliers.offset.sample(&mut rng);
                value.add_scalar_mut(o);
                Some(o)
            } else {
                None
            };
            drafts.push(Draft { t, modality, value, anchors, offset });
        }
    }

    // stable: keeps per-modality order and modality precedence on ties
    drafts.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut out = SampledStream { records: Vec::with_capacity(drafts.len()), outliers: Vec::new() };
    for (seq, draft) in drafts.into_iter().enumerate() {
        let seq = seq as u64;
        if let Some(offset) = draft.offset {
            out.outliers.push(OutlierEvent { seq, t: draft.t, modality: draft.modality, offset });
        }
        out.records.push(MeasurementRecord::new(draft.t, draft.modality, draft.value, draft.anchors, seq)?);
    }
    Ok(out)
}
