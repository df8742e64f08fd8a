//! Calibration and band construction for any [`MonotonicScore`].

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::localizer::Localizer;
use crate::quantile::{conformal_quantile, QuantileLevel, WeightedEmpiricalCdf};
use crate::rng::SeededRng;

use super::baseline::Tails;
use super::scores::MonotonicScore;
use super::slcp::{BaseModel, LocalizedScores};
use super::{CalibratedBand, Corrections, Diagnostics, Interval, PointPrediction, SplitIndices};

/// `θ* = Q(coverage, {p(V_i, F̂_i, 0)} ∪ {+∞})`.
pub fn generalized_calibrate(
    score: &dyn MonotonicScore,
    scores_cal: &[f64],
    cdfs_cal: &[WeightedEmpiricalCdf],
    coverage: QuantileLevel,
) -> Result<f64> {
    if scores_cal.len() != cdfs_cal.len() {
        return Err(Error::LengthMismatch {
            what: "calibration scores and CDFs",
            left: scores_cal.len(),
            right: cdfs_cal.len(),
        });
    }
    let thetas: Vec<f64> = scores_cal
        .iter()
        .zip(cdfs_cal)
        .map(|(&v, f)| score.inverse(v, f, 0.0))
        .collect::<Result<_>>()?;
    conformal_quantile(&thetas, coverage, true)
}

/// How a one-sided score relates to the response at a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreInversion {
    /// `V = y − center`: accepted scores bound `y` from above.
    Upper { center: f64 },
    /// `V = center − y`: accepted scores bound `y` from below.
    Lower { center: f64 },
}

/// The set of responses whose score is accepted at `θ*`.
pub fn generalized_band(
    score: &dyn MonotonicScore,
    theta_star: f64,
    query_cdf: &WeightedEmpiricalCdf,
    inversion: ScoreInversion,
) -> Result<Interval> {
    let t = score.threshold(query_cdf, theta_star)?;
    if t.is_nan() {
        return Err(Error::NotInvertible(format!("{} threshold is NaN", score.name())));
    }
    Ok(match inversion {
        ScoreInversion::Upper { center } => Interval::new(f64::NEG_INFINITY, center + t),
        ScoreInversion::Lower { center } => Interval::new(center - t, f64::INFINITY),
    })
}

/// Two-sided localized band from a pair of monotonic scores, one per tail.
#[derive(Debug)]
pub struct GeneralizedSlcp {
    scores: LocalizedScores,
    upper_score: Box<dyn MonotonicScore>,
    lower_score: Box<dyn MonotonicScore>,
    theta_upper: f64,
    theta_lower: f64,
    calibration_fallbacks: usize,
}

impl GeneralizedSlcp {
    /// `upper_score` and `lower_score` are applied to `Y − c_up(X)` and
    /// `c_lo(X) − Y`; their `θ*` are taken at `1 − α_hi` and `1 − α_lo`.
    #[allow(clippy::too_many_arguments)]
    pub fn calibrate(
        base: BaseModel,
        localizer: &Localizer,
        data: &Dataset,
        split: &SplitIndices,
        tails: Tails,
        upper_score: Box<dyn MonotonicScore>,
        lower_score: Box<dyn MonotonicScore>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let scores = LocalizedScores::build(base, localizer, data, split, rng)?;
        let inputs = scores.calibration_inputs(data, split)?;
        let calibration_fallbacks = inputs.iter().filter(|(_, _, f)| f.uniform_fallback).count();
        let mut up = Vec::with_capacity(inputs.len());
        let mut down = Vec::with_capacity(inputs.len());
        let mut up_cdfs = Vec::with_capacity(inputs.len());
        let mut down_cdfs = Vec::with_capacity(inputs.len());
        for (u, d, f) in inputs {
            up.push(u);
            down.push(d);
            up_cdfs.push(f.upper);
            down_cdfs.push(f.lower);
        }
        let theta_upper = generalized_calibrate(upper_score.as_ref(), &up, &up_cdfs, tails.upper.complement())?;
        let theta_lower = generalized_calibrate(lower_score.as_ref(), &down, &down_cdfs, tails.lower.complement())?;
        Ok(Self {
            scores,
            upper_score,
            lower_score,
            theta_upper,
            theta_lower,
            calibration_fallbacks,
        })
    }

    pub fn theta_upper(&self) -> f64 {
        self.theta_upper
    }

    pub fn theta_lower(&self) -> f64 {
        self.theta_lower
    }
}

impl CalibratedBand for GeneralizedSlcp {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        let cdfs = self.scores.cdfs(x)?;
        let base = self.scores.base();
        let above = generalized_band(
            self.upper_score.as_ref(),
            self.theta_upper,
            &cdfs.upper,
            ScoreInversion::Upper {
                center: base.upper_center(x),
            },
        )?;
        let below = generalized_band(
            self.lower_score.as_ref(),
            self.theta_lower,
            &cdfs.lower,
            ScoreInversion::Lower {
                center: base.lower_center(x),
            },
        )?;
        let (interval, crossed) = above.intersect(below);
        Ok(PointPrediction {
            interval,
            uniform_fallback: cdfs.uniform_fallback,
            crossed,
        })
    }

    fn corrections(&self) -> Corrections {
        Corrections::Generalized {
            theta_lower: self.theta_lower,
            theta_upper: self.theta_upper,
        }
    }

    fn diagnostics(&self) -> Diagnostics {
        self.scores.diagnostics(self.calibration_fallbacks)
    }
}
