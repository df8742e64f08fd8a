//! Split conformal (symmetric and asymmetric) and conformalized quantile
//! regression.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quantile::{conformal_quantile, QuantileLevel};
use crate::regressors::SharedPredictor;

use super::{predictions, CalibratedBand, Corrections, Interval, PointPrediction, SplitIndices};

/// Miscoverage assigned to each tail: `lower` below the band, `upper` above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tails {
    pub lower: QuantileLevel,
    pub upper: QuantileLevel,
}

impl Tails {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let tails = Self {
            lower: QuantileLevel::new(lower)?,
            upper: QuantileLevel::new(upper)?,
        };
        if lower + upper >= 1.0 {
            return Err(Error::InvalidLevel(lower + upper));
        }
        Ok(tails)
    }

    /// `α/2` on each side.
    pub fn even(alpha: QuantileLevel) -> Self {
        let half = QuantileLevel::new(alpha.value() / 2.0).expect("half of a level is a level");
        Self {
            lower: half,
            upper: half,
        }
    }

    pub fn total(&self) -> f64 {
        self.lower.value() + self.upper.value()
    }
}

fn require_cal(split: &SplitIndices) -> Result<()> {
    if split.cal.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// `[μ̂(x) − d, μ̂(x) + d]` with `d` the `⌈(1−α)(n+1)⌉`-th smallest absolute
/// calibration residual (rank clamped to `n`, no `+∞` atom).
#[derive(Debug, Clone)]
pub struct SplitConformal {
    model: SharedPredictor,
    d: f64,
}

impl SplitConformal {
    pub fn calibrate(
        model: SharedPredictor,
        data: &Dataset,
        split: &SplitIndices,
        alpha: QuantileLevel,
    ) -> Result<Self> {
        require_cal(split)?;
        let mu = predictions(&model, data, &split.cal);
        let scores: Vec<f64> = split.cal.iter().zip(&mu).map(|(&i, m)| (data.y(i) - m).abs()).collect();
        let d = conformal_quantile(&scores, alpha.complement(), false)?;
        Ok(Self { model, d })
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

impl CalibratedBand for SplitConformal {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        let mu = self.model.predict(x);
        Ok(Interval::new(mu - self.d, mu + self.d).into())
    }

    fn corrections(&self) -> Corrections {
        Corrections::Symmetric { d: self.d }
    }
}

/// `[μ̂(x) − Q_lo, μ̂(x) + Q_hi]` from one-sided residuals
/// `Y − μ̂(X)` (upper) and `μ̂(X) − Y` (lower).
#[derive(Debug, Clone)]
pub struct AsymmetricSplitConformal {
    model: SharedPredictor,
    lower: f64,
    upper: f64,
}

impl AsymmetricSplitConformal {
    pub fn calibrate(model: SharedPredictor, data: &Dataset, split: &SplitIndices, tails: Tails) -> Result<Self> {
        require_cal(split)?;
        let mu = predictions(&model, data, &split.cal);
        let up: Vec<f64> = split.cal.iter().zip(&mu).map(|(&i, m)| data.y(i) - m).collect();
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        Ok(Self {
            model,
            upper: conformal_quantile(&up, tails.upper.complement(), false)?,
            lower: conformal_quantile(&down, tails.lower.complement(), false)?,
        })
    }
}

impl CalibratedBand for AsymmetricSplitConformal {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        let mu = self.model.predict(x);
        let (interval, crossed) = Interval::ordered(mu - self.lower, mu + self.upper);
        Ok(PointPrediction {
            interval,
            uniform_fallback: false,
            crossed,
        })
    }

    fn corrections(&self) -> Corrections {
        Corrections::Asymmetric {
            lower: self.lower,
            upper: self.upper,
        }
    }
}

/// Conformalized quantile regression:
/// `E_i = max(q̂_lo(X_i) − Y_i, Y_i − q̂_hi(X_i))`,
/// `d = Q(1 − α, {E_i} ∪ {+∞})`, band `[q̂_lo − d, q̂_hi + d]`.
#[derive(Debug, Clone)]
pub struct Cqr {
    lower: SharedPredictor,
    upper: SharedPredictor,
    d: f64,
}

impl Cqr {
    pub fn calibrate(
        lower: SharedPredictor,
        upper: SharedPredictor,
        data: &Dataset,
        split: &SplitIndices,
        alpha: QuantileLevel,
    ) -> Result<Self> {
        require_cal(split)?;
        let scores: Vec<f64> = split
            .cal
            .iter()
            .map(|&i| {
                let x = data.x(i);
                let y = data.y(i);
                (lower.predict(x) - y).max(y - upper.predict(x))
            })
            .collect();
        let d = conformal_quantile(&scores, alpha.complement(), true)?;
        Ok(Self { lower, upper, d })
    }

    pub fn d(&self) -> f64 {
        self.d
    }
}

impl CalibratedBand for Cqr {
    fn predict_point(&self, x: &[f64]) -> Result<PointPrediction> {
        let (interval, crossed) = Interval::ordered(self.lower.predict(x) - self.d, self.upper.predict(x) + self.d);
        Ok(PointPrediction {
            interval,
            uniform_fallback: false,
            crossed,
        })
    }

    fn corrections(&self) -> Corrections {
        Corrections::Cqr { d: self.d }
    }
}
