//! Split localized conformal prediction.
//!
//! Scores are one-sided: `V_up = Y − c_up(X)` and `V_lo = c_lo(X) − Y`, where
//! the centres are `μ̂` for a mean base or `q̂_hi`/`q̂_lo` for a quantile
//! pair. For each side the score is recentred by the localized quantile
//! `Q(1 − α_s, F̂_h(V_s | X = x))`, whose CDF is always built from
//! training-split scores. The conformal correction is the
//! `⌈(1 − α_s)(n + 1)⌉`-th smallest recentred calibration score, with a
//! `+∞` atom appended.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::localizer::{AnchorBatch, FittedLocalizer, Localizer, SortedScores};
use crate::quantile::{conformal_quantile, QuantileLevel, WeightedEmpiricalCdf};
use crate::regressors::{Predictor, SharedPredictor};
use crate::rng::SeededRng;

use super::baseline::Tails;
use super::{predictions, CalibratedBand, Corrections, Diagnostics, Interval, PointPrediction, SplitIndices};

/// The regression model(s) the scores are measured against.
#[derive(Debug, Clone)]
pub enum BaseModel {
    Mean(SharedPredictor),
    QuantilePair {
        lower: SharedPredictor,
        upper: SharedPredictor,
    },
}

impl BaseModel {
    pub(crate) fn upper_center(&self, x: &[f64]) -> f64 {
        match self {
            Self::Mean(m) => m.predict(x),
            Self::QuantilePair { upper, .. } => upper.predict(x),
        }
    }

    pub(crate) fn lower_center(&self, x: &[f64]) -> f64 {
        match self {
            Self::Mean(m) => m.predict(x),
            Self::QuantilePair { lower, .. } => lower.predict(x),
        }
    }
}

/// Localized CDFs of both one-sided scores, anchored on the training split.
#[derive(Debug, Clone)]
pub(crate) struct LocalizedScores {
    base: BaseModel,
    localizer: FittedLocalizer,
    batch: AnchorBatch,
    upper: SortedScores,
    lower: SortedScores,
}

pub(crate) struct QueryCdfs {
    pub upper: WeightedEmpiricalCdf,
    pub lower: WeightedEmpiricalCdf,
    pub uniform_fallback: bool,
}

impl LocalizedScores {
    /// Fits the localizer on the training features and draws the mini-batch
    /// used for every later query.
    pub(crate) fn build(
        base: BaseModel,
        localizer: &Localizer,
        data: &Dataset,
        split: &SplitIndices,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if split.train.is_empty() || split.cal.is_empty() {
            return Err(Error::EmptySample);
        }
        let train = data.select(&split.train);
        let fitted = localizer.fit(&train.features)?;
        let batch = fitted.draw_batch(rng);
        let up: Vec<f64> = (0..train.len())
            .map(|i| train.y(i) - base.upper_center(train.x(i)))
            .collect();
        let down: Vec<f64> = (0..train.len())
            .map(|i| base.lower_center(train.x(i)) - train.y(i))
            .collect();
        Ok(Self {
            upper: SortedScores::for_batch(&batch, &up),
            lower: SortedScores::for_batch(&batch, &down),
            base,
            localizer: fitted,
            batch,
        })
    }

    pub(crate) fn cdfs(&self, x: &[f64]) -> Result<QueryCdfs> {
        let w = self.localizer.weights(&self.batch, x);
        Ok(QueryCdfs {
            upper: self.upper.cdf(&w)?,
            lower: self.lower.cdf(&w)?,
            uniform_fallback: w.uniform_fallback,
        })
    }

    pub(crate) fn base(&self) -> &BaseModel {
        &self.base
    }

    /// One-sided calibration scores with the CDFs at each calibration point.
    pub(crate) fn calibration_inputs(
        &self,
        data: &Dataset,
        split: &SplitIndices,
    ) -> Result<Vec<(f64, f64, QueryCdfs)>> {
        split
            .cal
            .par_iter()
            .map(|&i| {
                let x = data.x(i);
                let y = data.y(i);
                let up = y - self.base.upper_center(x);
                let down = self.base.lower_center(x) - y;
                Ok((up, down, self.cdfs(x)?))
            })
            .collect()
    }

    pub(crate) fn diagnostics(&self, calibration_fallbacks: usize) -> Diagnostics {
        Diagnostics {
            bandwidth: Some(self.localizer.bandwidth()),
            batch_size: Some(self.batch.len()),
            calibration_fallbacks,
        }
    }
}

/// Calibrated SLCP band.
#[derive(Debug, Clone)]
pub struct Slcp {
    scores: LocalizedScores,
    upper_level: QuantileLevel,
    lower_level: QuantileLevel,
    upper_correction: f64,
    lower_correction: f64,
    calibration_fallbacks: usize,
}

impl Slcp {
    pub fn calibrate(
        base: BaseModel,
        localizer: &Localizer,
        data: &Dataset,
        split: &SplitIndices,
        tails: Tails,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let scores = LocalizedScores::build(base, localizer, data, split, rng)?;
        let upper_level = tails.upper.complement();
        let lower_level = tails.lower.complement();
        let inputs = scores.calibration_inputs(data, split)?;
        let up: Vec<f64> = inputs
            .iter()
            .map(|(v, _, f)| v - f.upper.quantile(upper_level))
            .collect();
        let down: Vec<f64> = inputs
            .iter()
            .map(|(_, v, f)| v - f.lower.quantile(lower_level))
            .collect();
        let calibration_fallbacks = inputs.iter().filter(|(_, _, f)| f.uniform_fallback).count();
        Ok(Self {
            upper_correction: conformal_quantile(&up, upper_level, true)?,
            lower_correction: conformal_quantile(&down, lower_level, true)?,
            scores,
            upper_level,
            lower_level,
            calibration_fallbacks,
        })
    }

    pub fn upper_correction(&self) -> f64 {
        self.upper_correction
    }

    pub fn lower_correction(&self) -> f64 {
        self.lower_correction
    }

    pub fn bandwidth(&self) -> f64 {
        self.scores.localizer.bandwidth()
    }
}

impl CalibratedBand for Slcp {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        let cdfs = self.scores.cdfs(x)?;
        let base = self.scores.base();
        let upper = base.upper_center(x) + cdfs.upper.quantile(self.upper_level) + self.upper_correction;
        let lower = base.lower_center(x) - cdfs.lower.quantile(self.lower_level) - self.lower_correction;
        let (interval, crossed) = Interval::ordered(lower, upper);
        Ok(PointPrediction {
            interval,
            uniform_fallback: cdfs.uniform_fallback,
            crossed,
        })
    }

    fn corrections(&self) -> Corrections {
        Corrections::Localized {
            lower: self.lower_correction,
            upper: self.upper_correction,
        }
    }

    fn diagnostics(&self) -> Diagnostics {
        self.scores.diagnostics(self.calibration_fallbacks)
    }
}

/// `q̂(x) + Q(level, F̂_h(R | X = x))` with residuals `R = Y − q̂(X)` taken
/// over the training split.
#[derive(Debug, Clone)]
pub struct LocalizedQuantileModel {
    base: SharedPredictor,
    localizer: FittedLocalizer,
    batch: AnchorBatch,
    residuals: SortedScores,
    level: QuantileLevel,
}

impl LocalizedQuantileModel {
    pub fn fit(
        base: SharedPredictor,
        localizer: &Localizer,
        data: &Dataset,
        split: &SplitIndices,
        level: QuantileLevel,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if split.train.is_empty() {
            return Err(Error::EmptySample);
        }
        let train = data.select(&split.train);
        let fitted = localizer.fit(&train.features)?;
        let batch = fitted.draw_batch(rng);
        let fitted_values = predictions(&base, data, &split.train);
        let residuals: Vec<f64> = split
            .train
            .iter()
            .zip(&fitted_values)
            .map(|(&i, q)| data.y(i) - q)
            .collect();
        Ok(Self {
            residuals: SortedScores::for_batch(&batch, &residuals),
            base,
            localizer: fitted,
            batch,
            level,
        })
    }

    /// The additive correction `Q(level, F̂_h(R | X = x))` alone.
    pub fn correction(&self, x: &[f64]) -> Result<f64> {
        let w = self.localizer.weights(&self.batch, x);
        Ok(self.residuals.cdf(&w)?.quantile(self.level))
    }

    pub fn corrected(&self, x: &[f64]) -> Result<f64> {
        Ok(self.base.predict(x) + self.correction(x)?)
    }
}

impl Predictor for LocalizedQuantileModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.corrected(x).expect("localizer weights are always normalizable")
    }
}

/// One-shot form of [`LocalizedQuantileModel`].
pub fn localized_quantile_correction(
    base: SharedPredictor,
    localizer: &Localizer,
    data: &Dataset,
    split: &SplitIndices,
    level: QuantileLevel,
    query: &[f64],
    rng: &mut SeededRng,
) -> Result<f64> {
    LocalizedQuantileModel::fit(base, localizer, data, split, level, rng)?.corrected(query)
}
