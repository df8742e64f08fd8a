//! Monotonic score functions for the generalized localized engine.
//!
//! A score `m(v, F, θ)` is non-decreasing in `θ`; its semi-inverse is
//! `p(v, F, t) = inf{θ : m(v, F, θ) ≥ t}`. Calibration collects
//! `θ_i = p(V_i, F̂_i, 0)` and a query score `v` is accepted when
//! `p(v, F̂, 0) ≤ θ*`. [`MonotonicScore::threshold`] returns the largest such
//! `v`, which is what turns the acceptance rule into an interval.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::quantile::{QuantileLevel, WeightedEmpiricalCdf};

/// Default `ε` for [`MultiplicativeQuantile`].
pub const DEFAULT_EPSILON: f64 = 1e-8;

pub trait MonotonicScore: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// `m(v, F, θ)`.
    fn score(&self, v: f64, cdf: &WeightedEmpiricalCdf, theta: f64) -> f64;

    /// `p(v, F, t)`.
    fn inverse(&self, v: f64, cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64>;

    /// `sup{v : p(v, F, 0) ≤ θ}`; `+∞` when every `v` qualifies.
    fn threshold(&self, cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64>;
}

/// `m = Q(level, F) + θ − v`.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveQuantile {
    pub level: QuantileLevel,
}

impl MonotonicScore for AdditiveQuantile {
    fn name(&self) -> &'static str {
        "additive_quantile"
    }

    fn score(&self, v: f64, cdf: &WeightedEmpiricalCdf, theta: f64) -> f64 {
        cdf.quantile(self.level) + theta - v
    }

    fn inverse(&self, v: f64, cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64> {
        Ok(t + v - cdf.quantile(self.level))
    }

    fn threshold(&self, cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64> {
        Ok(cdf.quantile(self.level) + theta)
    }
}

/// `m = θ(ε + |Q(level, F)|) − v`.
#[derive(Debug, Clone, Copy)]
pub struct MultiplicativeQuantile {
    pub level: QuantileLevel,
    pub epsilon: f64,
}

impl MultiplicativeQuantile {
    fn scale(&self, cdf: &WeightedEmpiricalCdf) -> f64 {
        self.epsilon + cdf.quantile(self.level).abs()
    }
}

impl MonotonicScore for MultiplicativeQuantile {
    fn name(&self) -> &'static str {
        "multiplicative_quantile"
    }

    fn score(&self, v: f64, cdf: &WeightedEmpiricalCdf, theta: f64) -> f64 {
        theta * self.scale(cdf) - v
    }

    fn inverse(&self, v: f64, cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64> {
        let scale = self.scale(cdf);
        if !(scale > 0.0) {
            return Err(Error::DivergentInversion(
                "multiplicative score with zero localized quantile needs epsilon > 0".into(),
            ));
        }
        Ok((t + v) / scale)
    }

    fn threshold(&self, cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64> {
        if theta == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let t = theta * self.scale(cdf);
        if t.is_nan() {
            return Err(Error::NotInvertible("multiplicative score with zero scale".into()));
        }
        Ok(t)
    }
}

/// `m = E_F[V] + θ − v`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdditiveExpectation;

impl MonotonicScore for AdditiveExpectation {
    fn name(&self) -> &'static str {
        "additive_expectation"
    }

    fn score(&self, v: f64, cdf: &WeightedEmpiricalCdf, theta: f64) -> f64 {
        cdf.mean() + theta - v
    }

    fn inverse(&self, v: f64, cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64> {
        Ok(t + v - cdf.mean())
    }

    fn threshold(&self, cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64> {
        Ok(cdf.mean() + theta)
    }
}

/// `m = Q(θ, F) − v`, inverted by `p(v, F, 0) = Pr_F[V < v]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThetaQuantile;

impl MonotonicScore for ThetaQuantile {
    fn name(&self) -> &'static str {
        "theta_quantile"
    }

    fn score(&self, v: f64, cdf: &WeightedEmpiricalCdf, theta: f64) -> f64 {
        cdf.quantile_at(theta) - v
    }

    fn inverse(&self, v: f64, cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64> {
        Ok(cdf.prob_below(v + t))
    }

    fn threshold(&self, cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64> {
        if theta.is_nan() {
            return Err(Error::NotInvertible("theta is NaN".into()));
        }
        if theta < 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(cdf.upper_quantile_at(theta))
    }
}

/// `m = θ − v`: ignores the localized CDF and reduces to split conformal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vanilla;

impl MonotonicScore for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn score(&self, v: f64, _cdf: &WeightedEmpiricalCdf, theta: f64) -> f64 {
        theta - v
    }

    fn inverse(&self, v: f64, _cdf: &WeightedEmpiricalCdf, t: f64) -> Result<f64> {
        Ok(t + v)
    }

    fn threshold(&self, _cdf: &WeightedEmpiricalCdf, theta: f64) -> Result<f64> {
        Ok(theta)
    }
}

/// Builds a score for one side given that side's coverage level and `ε`.
pub type ScoreFactory = fn(QuantileLevel, f64) -> Box<dyn MonotonicScore>;

/// Score functions by name.
#[derive(Clone)]
pub struct ScoreRegistry {
    entries: BTreeMap<&'static str, ScoreFactory>,
}

impl Default for ScoreRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ScoreRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("additive_quantile", |level, _| Box::new(AdditiveQuantile { level }));
        r.register("multiplicative_quantile", |level, epsilon| {
            Box::new(MultiplicativeQuantile { level, epsilon })
        });
        r.register("additive_expectation", |_, _| Box::new(AdditiveExpectation));
        r.register("theta_quantile", |_, _| Box::new(ThetaQuantile));
        r.register("vanilla", |_, _| Box::new(Vanilla));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: ScoreFactory) {
        self.entries.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str, level: QuantileLevel, epsilon: f64) -> Result<Box<dyn MonotonicScore>> {
        self.entries
            .get(name)
            .map(|f| f(level, epsilon))
            .ok_or_else(|| Error::Unknown {
                kind: "score",
                name: name.to_string(),
            })
    }
}
