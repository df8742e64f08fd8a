//! Conformal procedures and the strategy interface they share.
//!
//! Every method follows the same life cycle: calibrate once against a
//! [`SplitIndices`] partition, then evaluate intervals for any number of
//! queries through [`CalibratedBand`]. Methods are also exposed as
//! [`ConformalMethod`] strategies that a [`MethodRegistry`] builds by name
//! from a [`MethodConfig`].
//!
//! Miscoverage convention: every public entry point takes the miscoverage
//! `α` (or the tail pair `α_lo + α_hi = α`); correction quantiles are taken
//! at the coverage level `1 − α_s`.

mod baseline;
mod generalized;
mod registry;
mod scores;
mod slcp;
mod split;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Features};
use crate::error::Result;
use crate::quantile::QuantileLevel;
use crate::regressors::{RegressorKind, SharedPredictor, TrainConfig};
use crate::rng::SeededRng;

pub use baseline::{AsymmetricSplitConformal, Cqr, SplitConformal, Tails};
pub use generalized::{generalized_band, generalized_calibrate, GeneralizedSlcp, ScoreInversion};
pub use registry::{BaseChoice, MethodConfig, MethodFactory, MethodRegistry};
pub use scores::{
    AdditiveExpectation, AdditiveQuantile, MonotonicScore, MultiplicativeQuantile, ScoreFactory, ScoreRegistry,
    ThetaQuantile, Vanilla, DEFAULT_EPSILON,
};
pub use slcp::{localized_quantile_correction, BaseModel, LocalizedQuantileModel, Slcp};
pub use split::{split_data, split_three, DataSplit, SplitIndices};

/// Closed interval `[lower, upper]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn unbounded() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    /// Intersection; crossed bounds collapse to their midpoint and report
    /// `true`.
    fn intersect(self, other: Interval) -> (Interval, bool) {
        Self::ordered(self.lower.max(other.lower), self.upper.min(other.upper))
    }

    /// Builds `[lower, upper]`, collapsing crossed bounds to their midpoint.
    pub(crate) fn ordered(lower: f64, upper: f64) -> (Interval, bool) {
        if lower <= upper {
            (Interval::new(lower, upper), false)
        } else {
            let mid = 0.5 * (lower + upper);
            (Interval::new(mid, mid), true)
        }
    }
}

/// Calibration scalars a method applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corrections {
    Symmetric { d: f64 },
    Asymmetric { lower: f64, upper: f64 },
    Cqr { d: f64 },
    Localized { lower: f64, upper: f64 },
    Generalized { theta_lower: f64, theta_upper: f64 },
}

/// Interval for one query with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPrediction {
    pub interval: Interval,
    /// The localizer found no anchor in the kernel support and used uniform
    /// weights.
    pub uniform_fallback: bool,
    /// Lower and upper bounds crossed and were collapsed.
    pub crossed: bool,
}

impl From<Interval> for PointPrediction {
    fn from(interval: Interval) -> Self {
        Self {
            interval,
            uniform_fallback: false,
            crossed: false,
        }
    }
}

/// Per-query intervals plus the corrections that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalBand {
    pub intervals: Vec<Interval>,
    pub corrections: Corrections,
    pub uniform_fallbacks: usize,
    pub crossed: usize,
}

/// Extra facts about a calibrated method, echoed into run manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Calibration points whose localized CDF fell back to uniform weights.
    pub calibration_fallbacks: usize,
}

/// A calibrated method, ready to produce intervals. Immutable and shareable.
pub trait CalibratedBand: Send + Sync {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction>;

    fn corrections(&self) -> Corrections;

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::default()
    }

    fn interval(&self, x: &[f64]) -> Result<Interval> {
        Ok(self.predict_point(x)?.interval)
    }

    fn predict(&self, queries: &Features) -> Result<ConformalBand> {
        let points: Vec<PointPrediction> = (0..queries.len())
            .into_par_iter()
            .map(|i| self.predict_point(queries.row(i)))
            .collect::<Result<_>>()?;
        Ok(ConformalBand {
            intervals: points.iter().map(|p| p.interval).collect(),
            corrections: self.corrections(),
            uniform_fallbacks: points.iter().filter(|p| p.uniform_fallback).count(),
            crossed: points.iter().filter(|p| p.crossed).count(),
        })
    }
}

/// Supplies base models fitted on the training split.
pub trait ModelSource: Send + Sync {
    /// Conditional-mean model `μ̂`.
    fn mean(&self) -> Result<SharedPredictor>;
    /// Conditional-quantile model `q̂` at `level`.
    fn quantile(&self, level: QuantileLevel) -> Result<SharedPredictor>;
}

/// Inputs every strategy calibrates against.
pub struct CalibrationContext<'a> {
    pub data: &'a Dataset,
    pub split: &'a SplitIndices,
    pub models: &'a dyn ModelSource,
}

/// A conformal procedure selected at runtime.
pub trait ConformalMethod: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Target miscoverage `α`.
    fn alpha(&self) -> f64;

    fn calibrate(&self, ctx: &CalibrationContext<'_>, rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>>;
}

/// Base-model family; the mean and quantile variants are derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFamily {
    /// Zero predictor for both mean and quantiles (`V = Y`).
    Constant,
    /// Least-squares mean, pinball-loss quantiles.
    Linear {
        #[serde(default)]
        train: TrainConfig,
    },
    /// k-NN mean and k-NN quantiles.
    Knn { k: usize },
}

impl Default for ModelFamily {
    fn default() -> Self {
        Self::Knn { k: 30 }
    }
}

impl ModelFamily {
    pub fn mean_kind(&self) -> RegressorKind {
        match *self {
            Self::Constant => RegressorKind::ConstantZero,
            Self::Linear { .. } => RegressorKind::LinearMean,
            Self::Knn { k } => RegressorKind::KnnMean(k),
        }
    }

    pub fn quantile_kind(&self, level: QuantileLevel) -> RegressorKind {
        match *self {
            Self::Constant => RegressorKind::ConstantZero,
            Self::Linear { .. } => RegressorKind::LinearQuantile(level),
            Self::Knn { k } => RegressorKind::KnnQuantile(k, level),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        match *self {
            Self::Linear { train } => train,
            _ => TrainConfig::default(),
        }
    }
}

/// Fits models from a [`ModelFamily`] on the training rows, once per
/// distinct request.
pub struct FittingModelSource {
    family: ModelFamily,
    train: Dataset,
    cache: Mutex<HashMap<Option<u64>, SharedPredictor>>,
}

impl FittingModelSource {
    pub fn new(family: ModelFamily, data: &Dataset, split: &SplitIndices) -> Self {
        Self {
            family,
            train: data.select(&split.train),
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn get(&self, key: Option<u64>, kind: RegressorKind) -> Result<SharedPredictor> {
        if let Some(m) = self.cache.lock().expect("model cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let fitted = kind.fit(&self.train, &self.family.train_config())?;
        self.cache
            .lock()
            .expect("model cache poisoned")
            .insert(key, fitted.clone());
        Ok(fitted)
    }
}

impl ModelSource for FittingModelSource {
    fn mean(&self) -> Result<SharedPredictor> {
        self.get(None, self.family.mean_kind())
    }

    fn quantile(&self, level: QuantileLevel) -> Result<SharedPredictor> {
        self.get(Some(level.value().to_bits()), self.family.quantile_kind(level))
    }
}

/// Fixed models handed in by the caller.
#[derive(Debug, Clone)]
pub struct FixedModels {
    pub mean: Option<SharedPredictor>,
    pub quantiles: Vec<(QuantileLevel, SharedPredictor)>,
}

impl ModelSource for FixedModels {
    fn mean(&self) -> Result<SharedPredictor> {
        self.mean.clone().ok_or(crate::error::Error::NotFitted)
    }

    fn quantile(&self, level: QuantileLevel) -> Result<SharedPredictor> {
        self.quantiles
            .iter()
            .find(|(l, _)| (l.value() - level.value()).abs() < 1e-12)
            .map(|(_, m)| m.clone())
            .ok_or(crate::error::Error::NotFitted)
    }
}

pub(crate) fn predictions(model: &SharedPredictor, data: &Dataset, indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| model.predict(data.x(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_basics() {
        let i = Interval::new(0.0, 2.0);
        assert!(i.contains(0.0) && i.contains(2.0) && !i.contains(2.1));
        assert_eq!(i.width(), 2.0);
        assert!(!Interval::unbounded().is_finite());
        let (c, crossed) = Interval::ordered(3.0, 1.0);
        assert!(crossed);
        assert_eq!(c, Interval::new(2.0, 2.0));
        let (j, crossed) = Interval::new(f64::NEG_INFINITY, 4.0).intersect(Interval::new(1.0, f64::INFINITY));
        assert!(!crossed);
        assert_eq!(j, Interval::new(1.0, 4.0));
    }

    #[test]
    fn model_family_serde() {
        let f: ModelFamily = serde_json::from_str(r#"{"kind":"knn","k":10}"#).unwrap();
        assert_eq!(f, ModelFamily::Knn { k: 10 });
        let f: ModelFamily = serde_json::from_str(r#"{"kind":"linear"}"#).unwrap();
        assert_eq!(f.train_config(), TrainConfig::default());
        assert!(serde_json::from_str::<ModelFamily>(r#"{"kind":"forest"}"#).is_err());
    }
}
