//! Method configuration and the name-keyed strategy registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::{Bandwidth, KernelKind, Localizer};
use crate::quantile::QuantileLevel;
use crate::rng::SeededRng;

use super::baseline::{AsymmetricSplitConformal, Cqr, SplitConformal, Tails};
use super::generalized::GeneralizedSlcp;
use super::scores::{ScoreRegistry, DEFAULT_EPSILON};
use super::slcp::{BaseModel, Slcp};
use super::{CalibratedBand, CalibrationContext, ConformalMethod, ModelSource};

/// Which base model the localized methods score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseChoice {
    /// `V = ±(Y − μ̂(X))`.
    #[default]
    Mean,
    /// `V_up = Y − q̂_hi(X)`, `V_lo = q̂_lo(X) − Y` with quantile models at
    /// `α_lo` and `1 − α_hi`.
    Quantile,
}

/// One entry of an experiment's method list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMethodConfig")]
pub struct MethodConfig {
    pub kind: String,
    /// Label used in result rows and file names; defaults to `kind`.
    pub name: String,
    pub alpha: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub kernel: KernelKind,
    pub bandwidth: Bandwidth,
    pub batch_fraction: f64,
    pub base: BaseChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<String>,
    pub epsilon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethodConfig {
    kind: String,
    name: Option<String>,
    alpha: f64,
    alpha_lo: Option<f64>,
    alpha_hi: Option<f64>,
    #[serde(default)]
    kernel: KernelKind,
    #[serde(default)]
    bandwidth: Bandwidth,
    batch_fraction: Option<f64>,
    #[serde(default)]
    base: BaseChoice,
    score: Option<String>,
    epsilon: Option<f64>,
}

impl TryFrom<RawMethodConfig> for MethodConfig {
    type Error = String;

    fn try_from(raw: RawMethodConfig) -> std::result::Result<Self, String> {
        let label = raw.name.clone().unwrap_or_else(|| raw.kind.clone());
        let alpha = raw.alpha;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(format!("method `{label}`: alpha must lie in (0, 1), got {alpha}"));
        }
        let (alpha_lo, alpha_hi) = match (raw.alpha_lo, raw.alpha_hi) {
            (None, None) => (alpha / 2.0, alpha / 2.0),
            (Some(lo), None) => (lo, alpha - lo),
            (None, Some(hi)) => (alpha - hi, hi),
            (Some(lo), Some(hi)) => {
                if (lo + hi - alpha).abs() > 1e-12 {
                    return Err(format!(
                        "method `{label}`: alpha_lo + alpha_hi ({lo} + {hi}) must equal alpha ({alpha})"
                    ));
                }
                (lo, hi)
            }
        };
        for (field, v) in [("alpha_lo", alpha_lo), ("alpha_hi", alpha_hi)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("method `{label}`: {field} must lie in (0, 1), got {v}"));
            }
        }
        let batch_fraction = raw.batch_fraction.unwrap_or(1.0);
        if !(batch_fraction > 0.0 && batch_fraction <= 1.0) {
            return Err(format!(
                "method `{label}`: batch_fraction must lie in (0, 1], got {batch_fraction}"
            ));
        }
        let epsilon = raw.epsilon.unwrap_or(DEFAULT_EPSILON);
        if !(epsilon >= 0.0) {
            return Err(format!("method `{label}`: epsilon must be non-negative, got {epsilon}"));
        }
        if raw.kind == "generalized" && raw.score.is_none() {
            return Err(format!("method `{label}`: generalized methods need a `score`"));
        }
        Ok(Self {
            kind: raw.kind,
            name: label,
            alpha,
            alpha_lo,
            alpha_hi,
            kernel: raw.kernel,
            bandwidth: raw.bandwidth,
            batch_fraction,
            base: raw.base,
            score: raw.score,
            epsilon,
        })
    }
}

impl MethodConfig {
    /// A config with defaults for everything but `kind` and `alpha`.
    pub fn new(kind: &str, alpha: f64) -> Result<Self> {
        RawMethodConfig {
            kind: kind.to_string(),
            name: None,
            alpha,
            alpha_lo: None,
            alpha_hi: None,
            kernel: KernelKind::default(),
            bandwidth: Bandwidth::default(),
            batch_fraction: None,
            base: BaseChoice::default(),
            score: (kind == "generalized").then(|| "additive_quantile".to_string()),
            epsilon: None,
        }
        .try_into()
        .map_err(Error::Config)
    }

    pub fn alpha_level(&self) -> Result<QuantileLevel> {
        QuantileLevel::new(self.alpha)
    }

    pub fn tails(&self) -> Result<Tails> {
        Tails::new(self.alpha_lo, self.alpha_hi)
    }

    pub fn localizer(&self) -> Result<Localizer> {
        Localizer::new(self.kernel, self.bandwidth).with_batch_fraction(self.batch_fraction)
    }
}

pub type MethodFactory = fn(&MethodConfig) -> Result<Box<dyn ConformalMethod>>;

/// Conformal methods by kind name.
#[derive(Clone)]
pub struct MethodRegistry {
    entries: BTreeMap<&'static str, MethodFactory>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// `split`, `asym`, `cqr`, `slcp` and `generalized`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("split", |c| {
            Ok(Box::new(SplitStrategy {
                alpha: c.alpha_level()?,
            }))
        });
        r.register("asym", |c| {
            Ok(Box::new(AsymStrategy {
                alpha: c.alpha,
                tails: c.tails()?,
            }))
        });
        r.register("cqr", |c| {
            Ok(Box::new(CqrStrategy {
                alpha: c.alpha_level()?,
                tails: c.tails()?,
            }))
        });
        r.register("slcp", |c| {
            Ok(Box::new(SlcpStrategy {
                alpha: c.alpha,
                tails: c.tails()?,
                localizer: c.localizer()?,
                base: c.base,
            }))
        });
        r.register("generalized", |c| {
            let score = c.score.clone().unwrap_or_else(|| "additive_quantile".into());
            let scores = ScoreRegistry::builtin();
            if !scores.contains(&score) {
                return Err(Error::Unknown {
                    kind: "score",
                    name: score,
                });
            }
            Ok(Box::new(GeneralizedStrategy {
                alpha: c.alpha,
                tails: c.tails()?,
                localizer: c.localizer()?,
                base: c.base,
                score,
                epsilon: c.epsilon,
                scores,
            }))
        });
        r
    }

    pub fn register(&mut self, kind: &'static str, factory: MethodFactory) {
        self.entries.insert(kind, factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, config: &MethodConfig) -> Result<Box<dyn ConformalMethod>> {
        let factory = self.entries.get(config.kind.as_str()).ok_or_else(|| Error::Unknown {
            kind: "method",
            name: config.kind.clone(),
        })?;
        factory(config)
    }
}

fn base_model(choice: BaseChoice, models: &dyn ModelSource, tails: Tails) -> Result<BaseModel> {
    Ok(match choice {
        BaseChoice::Mean => BaseModel::Mean(models.mean()?),
        BaseChoice::Quantile => BaseModel::QuantilePair {
            lower: models.quantile(tails.lower)?,
            upper: models.quantile(tails.upper.complement())?,
        },
    })
}

struct SplitStrategy {
    alpha: QuantileLevel,
}

impl ConformalMethod for SplitStrategy {
    fn kind(&self) -> &'static str {
        "split"
    }

    fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    fn calibrate(&self, ctx: &CalibrationContext<'_>, _rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>> {
        Ok(Box::new(SplitConformal::calibrate(
            ctx.models.mean()?,
            ctx.data,
            ctx.split,
            self.alpha,
        )?))
    }
}

struct AsymStrategy {
    alpha: f64,
    tails: Tails,
}

impl ConformalMethod for AsymStrategy {
    fn kind(&self) -> &'static str {
        "asym"
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn calibrate(&self, ctx: &CalibrationContext<'_>, _rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>> {
        Ok(Box::new(AsymmetricSplitConformal::calibrate(
            ctx.models.mean()?,
            ctx.data,
            ctx.split,
            self.tails,
        )?))
    }
}

struct CqrStrategy {
    alpha: QuantileLevel,
    tails: Tails,
}

impl ConformalMethod for CqrStrategy {
    fn kind(&self) -> &'static str {
        "cqr"
    }

    fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    fn calibrate(&self, ctx: &CalibrationContext<'_>, _rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>> {
        let lower = ctx.models.quantile(self.tails.lower)?;
        let upper = ctx.models.quantile(self.tails.upper.complement())?;
        Ok(Box::new(Cqr::calibrate(lower, upper, ctx.data, ctx.split, self.alpha)?))
    }
}

struct SlcpStrategy {
    alpha: f64,
    tails: Tails,
    localizer: Localizer,
    base: BaseChoice,
}

impl ConformalMethod for SlcpStrategy {
    fn kind(&self) -> &'static str {
        "slcp"
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn calibrate(&self, ctx: &CalibrationContext<'_>, rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>> {
        let base = base_model(self.base, ctx.models, self.tails)?;
        Ok(Box::new(Slcp::calibrate(
            base,
            &self.localizer,
            ctx.data,
            ctx.split,
            self.tails,
            rng,
        )?))
    }
}

struct GeneralizedStrategy {
    alpha: f64,
    tails: Tails,
    localizer: Localizer,
    base: BaseChoice,
    score: String,
    epsilon: f64,
    scores: ScoreRegistry,
}

impl ConformalMethod for GeneralizedStrategy {
    fn kind(&self) -> &'static str {
        "generalized"
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn calibrate(&self, ctx: &CalibrationContext<'_>, rng: &mut SeededRng) -> Result<Box<dyn CalibratedBand>> {
        let base = base_model(self.base, ctx.models, self.tails)?;
        let upper = self
            .scores
            .build(&self.score, self.tails.upper.complement(), self.epsilon)?;
        let lower = self
            .scores
            .build(&self.score, self.tails.lower.complement(), self.epsilon)?;
        Ok(Box::new(GeneralizedSlcp::calibrate(
            base,
            &self.localizer,
            ctx.data,
            ctx.split,
            self.tails,
            upper,
            lower,
            rng,
        )?))
    }
}
