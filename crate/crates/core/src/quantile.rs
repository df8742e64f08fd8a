//! Finite-sample quantile primitives.
//!
//! Two conventions live here and they are deliberately kept apart:
//!
//! * [`conformal_quantile`] is the rank-based quantile used for conformal
//!   corrections: the `⌈level·(n+1)⌉`-th smallest value, optionally with an
//!   extra `+∞` atom appended to the sample.
//! * [`weighted_quantile`] is the left-continuous generalized inverse of a
//!   weighted empirical CDF: the smallest atom whose cumulative weight reaches
//!   the level.
//!
//! Ties occupy consecutive ranks in both cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// A probability level strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(Self(level))
        } else {
            Err(Error::InvalidLevel(level))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - level`.
    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(level: QuantileLevel) -> f64 {
        level.0
    }
}

/// Rank used by [`conformal_quantile`], 1-based: `⌈level·(n+1)⌉`.
pub fn conformal_rank(n: usize, level: QuantileLevel) -> usize {
    let raw = (level.value() * (n as f64 + 1.0)).ceil();
    // ⌈·⌉ of a product of a float and an integer can land one above the exact
    // rational value; the sample is tiny relative to 2^52 so this cannot
    // misfire except at exact multiples, which we snap back.
    let exact = level.value() * (n as f64 + 1.0);
    let k = if (exact - exact.round()).abs() < 1e-9 {
        exact.round()
    } else {
        raw
    };
    k.max(1.0) as usize
}

/// The `k`-th smallest of `values` with `k = ⌈level·(n+1)⌉`.
///
/// With `augment_infinity` the sample is treated as `values ∪ {+∞}`, so the
/// result is `+∞` whenever `k > n`. Without it the rank is clamped to `n`.
pub fn conformal_quantile(values: &[f64], level: QuantileLevel, augment_infinity: bool) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = values.len();
    let k = conformal_rank(n, level);
    if k > n {
        if augment_infinity {
            return Ok(f64::INFINITY);
        }
        return Ok(kth_smallest(values, n));
    }
    Ok(kth_smallest(values, k))
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// A discrete distribution over real atoms with normalized weights.
///
/// Atoms are kept sorted ascending by value; equal values keep their input
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmpiricalCdf {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedEmpiricalCdf {
    /// Builds a CDF from `(value, weight)` atoms, sorting and renormalizing.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::EmptySample);
        }
        for &(v, w) in &atoms {
            if v.is_nan() {
                return Err(Error::NonFinite("cdf atom value"));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::ZeroWeights);
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, weights) = atoms.into_iter().unzip();
        Self::from_sorted(values, weights)
    }

    /// Uniform weights `1/n` over the given values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::new(values.iter().map(|&v| (v, w)))
    }

    /// Builds from atoms already sorted by value. Weights are renormalized
    /// when their total drifts from 1 by more than `1e-9`.
    pub fn from_sorted(values: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if values.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "cdf values and weights",
                left: values.len(),
                right: weights.len(),
            });
        }
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroWeights);
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self { values, weights })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl DoubleEndedIterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// Smallest atom whose cumulative weight is at least `level`.
    pub fn quantile(&self, level: QuantileLevel) -> f64 {
        self.quantile_at(level.value())
    }

    /// Generalized inverse for any real `level`: `-∞` for `level ≤ 0`, `+∞`
    /// for `level > 1`.
    pub fn quantile_at(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if level > 1.0 {
            return f64::INFINITY;
        }
        let mut cumulative = 0.0;
        for (v, w) in self.atoms() {
            cumulative += w;
            if cumulative >= level {
                return v;
            }
        }
        // rounding left the total a hair below `level`
        self.max_atom_with_weight()
    }

    /// Smallest atom whose cumulative weight strictly exceeds `level`;
    /// `+∞` when no atom does. This is `sup{v : Pr[V < v] ≤ level}`.
    pub fn upper_quantile_at(&self, level: f64) -> f64 {
        let mut cumulative = 0.0;
        for (v, w) in self.atoms() {
            cumulative += w;
            if cumulative > level && w > 0.0 {
                return v;
            }
        }
        f64::INFINITY
    }

    /// `Pr[V ≤ v]`.
    pub fn cdf(&self, v: f64) -> f64 {
        self.atoms().take_while(|&(a, _)| a <= v).map(|(_, w)| w).sum()
    }

    /// `Pr[V < v]`.
    pub fn prob_below(&self, v: f64) -> f64 {
        self.atoms().take_while(|&(a, _)| a < v).map(|(_, w)| w).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(v, w)| v * w).sum()
    }

    fn max_atom_with_weight(&self) -> f64 {
        self.atoms()
            .filter(|&(_, w)| w > 0.0)
            .map(|(v, _)| v)
            .next_back()
            .unwrap_or(self.values[self.values.len() - 1])
    }
}

/// Left-continuous generalized inverse of `cdf` at `level`.
pub fn weighted_quantile(cdf: &WeightedEmpiricalCdf, level: QuantileLevel) -> Result<f64> {
    if cdf.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(cdf.quantile(level))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(x: f64) -> QuantileLevel {
        QuantileLevel::new(x).unwrap()
    }

    #[test]
    fn conformal_quantile_examples() {
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(conformal_quantile(&nine, lvl(0.9), false).unwrap(), 9.0);
        let three = [0.1, 0.2, 0.3];
        assert_eq!(conformal_quantile(&three, lvl(0.9), true).unwrap(), f64::INFINITY);
        assert_eq!(conformal_quantile(&three, lvl(0.5), true).unwrap(), 0.2);
        assert_eq!(conformal_quantile(&three, lvl(0.9), false).unwrap(), 0.3);
    }

    #[test]
    fn empty_sample_errors() {
        let err = conformal_quantile(&[], lvl(0.5), false).unwrap_err();
        assert_eq!(err.to_string(), "empty sample");
        assert!(matches!(
            WeightedEmpiricalCdf::new(std::iter::empty()),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn level_validation() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
        assert!((lvl(0.1).complement().value() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rank_at_exact_multiples() {
        // 0.75 * 4 = 3 exactly; 0.7 * 10 = 7.000000000000001 in floating point
        assert_eq!(conformal_rank(3, lvl(0.75)), 3);
        assert_eq!(conformal_rank(9, lvl(0.7)), 7);
    }

    #[test]
    fn weighted_quantile_examples() {
        let cdf = WeightedEmpiricalCdf::new((1..=5).map(|v| (f64::from(v), 0.2))).unwrap();
        assert_eq!(weighted_quantile(&cdf, lvl(0.6)).unwrap(), 3.0);
        let single = WeightedEmpiricalCdf::new([(7.0, 1.0)]).unwrap();
        for l in [0.01, 0.5, 0.99] {
            assert_eq!(weighted_quantile(&single, lvl(l)).unwrap(), 7.0);
        }
        assert_eq!(weighted_quantile(&cdf, lvl(1.0 - 1e-12)).unwrap(), 5.0);
    }

    #[test]
    fn weights_are_renormalized_and_sorted() {
        let cdf = WeightedEmpiricalCdf::new([(3.0, 2.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(cdf.values(), &[1.0, 2.0, 3.0]);
        assert!((cdf.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(cdf.weights(), &[0.25, 0.25, 0.5]);
        assert!(matches!(
            WeightedEmpiricalCdf::new([(1.0, 0.0), (2.0, 0.0)]),
            Err(Error::ZeroWeights)
        ));
    }

    #[test]
    fn ties_are_stable() {
        let cdf = WeightedEmpiricalCdf::new([(1.0, 0.5), (1.0, 0.25), (0.0, 0.25)]).unwrap();
        assert_eq!(cdf.weights(), &[0.25, 0.5, 0.25]);
        assert_eq!(cdf.quantile(lvl(0.3)), 1.0);
    }

    #[test]
    fn cdf_helpers() {
        let cdf = WeightedEmpiricalCdf::uniform(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(cdf.prob_below(3.0), 0.5);
        assert_eq!(cdf.cdf(3.0), 0.75);
        assert_eq!(cdf.mean(), 2.5);
        assert_eq!(cdf.upper_quantile_at(0.5), 3.0);
        assert_eq!(cdf.upper_quantile_at(1.0), f64::INFINITY);
        assert_eq!(cdf.quantile_at(0.0), f64::NEG_INFINITY);
    }
}
