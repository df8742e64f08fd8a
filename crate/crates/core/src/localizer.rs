//! Kernel localization of a score distribution around a query point.
//!
//! Weights follow the Nadaraya-Watson form
//! `w(X_i | x) = K(‖f(X_i) − f(x)‖ / h) / Σ_j K(‖f(X_j) − f(x)‖ / h)`
//! where `f` is an embedding (identity by default) and `h` the bandwidth.
//! The conditional CDF of a score at `x` puts weight `w(X_i | x)` on the
//! anchor score `V_i`.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{euclidean, Features};
use crate::error::{Error, Result};
use crate::quantile::WeightedEmpiricalCdf;
use crate::rng::SeededRng;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Boxcar,
    Epanechnikov,
}

impl KernelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(Self::Gaussian),
            "boxcar" | "knn" => Ok(Self::Boxcar),
            "epanechnikov" | "epa" => Ok(Self::Epanechnikov),
            _ => Err(Error::Unknown {
                kind: "kernel",
                name: name.to_string(),
            }),
        }
    }

    fn value(self, u: f64) -> f64 {
        match self {
            Self::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Self::Boxcar => {
                if u <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Self::Epanechnikov => {
                if u <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// `K(u)` for a non-negative scaled distance `u`.
pub fn kernel_eval(kind: KernelKind, u: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::NegativeKernelArgument(u));
    }
    Ok(kind.value(u))
}

/// How the bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// Median pairwise distance of the embedded anchors.
    #[default]
    Median,
    /// A quantile of the pairwise distances (linear interpolation between
    /// order statistics; `0.5` coincides with [`Bandwidth::Median`]).
    PairwiseQuantile(f64),
    Fixed(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match *self {
            Self::Median => s.serialize_str("median"),
            Self::Fixed(h) => s.serialize_f64(h),
            Self::PairwiseQuantile(q) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("pairwise_quantile", &q)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Name(String),
            Quantile { pairwise_quantile: f64 },
        }
        use serde::de::Error as _;
        match Raw::deserialize(d)? {
            Raw::Number(h) if h > 0.0 && h.is_finite() => Ok(Self::Fixed(h)),
            Raw::Number(h) => Err(D::Error::custom(format!("bandwidth must be positive, got {h}"))),
            Raw::Name(s) if s == "median" => Ok(Self::Median),
            Raw::Name(s) => Err(D::Error::custom(format!(
                "bandwidth must be \"median\", a positive number or {{\"pairwise_quantile\": q}}, got \"{s}\""
            ))),
            Raw::Quantile { pairwise_quantile } if pairwise_quantile > 0.0 && pairwise_quantile <= 1.0 => {
                Ok(Self::PairwiseQuantile(pairwise_quantile))
            }
            Raw::Quantile { pairwise_quantile } => Err(D::Error::custom(format!(
                "pairwise_quantile must lie in (0, 1], got {pairwise_quantile}"
            ))),
        }
    }
}

/// Feature map applied before distances are measured.
pub trait Embedding: Send + Sync {
    fn embed(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Embedding for Identity {
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

impl<F> Embedding for F
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// Kernel localizer configuration. Immutable once built.
#[derive(Clone)]
pub struct Localizer {
    kernel: KernelKind,
    bandwidth: Bandwidth,
    embedding: Arc<dyn Embedding>,
    batch_fraction: f64,
}

impl fmt::Debug for Localizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Localizer")
            .field("kernel", &self.kernel)
            .field("bandwidth", &self.bandwidth)
            .field("batch_fraction", &self.batch_fraction)
            .finish_non_exhaustive()
    }
}

impl Default for Localizer {
    fn default() -> Self {
        Self::new(KernelKind::Gaussian, Bandwidth::Median)
    }
}

impl Localizer {
    pub fn new(kernel: KernelKind, bandwidth: Bandwidth) -> Self {
        Self {
            kernel,
            bandwidth,
            embedding: Arc::new(Identity),
            batch_fraction: 1.0,
        }
    }

    pub fn with_embedding(mut self, embedding: Arc<dyn Embedding>) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn with_batch_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidBatchFraction(fraction));
        }
        self.batch_fraction = fraction;
        Ok(self)
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn batch_fraction(&self) -> f64 {
        self.batch_fraction
    }

    /// Embeds the anchors and resolves the bandwidth against them.
    pub fn fit(&self, anchors: &Features) -> Result<FittedLocalizer> {
        if anchors.is_empty() {
            return Err(Error::EmptySample);
        }
        let embedded = embed_all(self.embedding.as_ref(), anchors)?;
        let bandwidth = match self.bandwidth {
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(Error::InvalidBandwidth(h)),
            Bandwidth::Median => median_bandwidth(&embedded)?,
            Bandwidth::PairwiseQuantile(q) => pairwise_distance_quantile(&embedded, q)?,
        };
        Ok(FittedLocalizer {
            kernel: self.kernel,
            bandwidth,
            embedding: Arc::clone(&self.embedding),
            anchors: embedded,
            batch_fraction: self.batch_fraction,
        })
    }
}

fn embed_all(embedding: &dyn Embedding, points: &Features) -> Result<Features> {
    let rows: Vec<Vec<f64>> = points.rows().map(|r| embedding.embed(r)).collect();
    Features::from_rows(&rows)
}

fn pairwise_distances(points: &Features) -> Vec<f64> {
    let n = points.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let a = points.row(i);
        for j in i + 1..n {
            out.push(euclidean(a, points.row(j)));
        }
    }
    out
}

/// Median of `‖f(X_i) − f(X_j)‖` over `i < j`; the mean of the two middle
/// values when the number of pairs is even.
pub fn median_bandwidth(points: &Features) -> Result<f64> {
    pairwise_distance_quantile(points, 0.5)
}

/// Quantile `q ∈ (0, 1]` of the pairwise distances, interpolating linearly
/// between adjacent order statistics.
pub fn pairwise_distance_quantile(points: &Features, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidLevel(q));
    }
    if points.len() < 2 {
        return Err(Error::DegenerateBandwidth);
    }
    let mut d = pairwise_distances(points);
    let pos = q * (d.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, lo_val, upper) = d.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    let h = if frac > 0.0 {
        let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
        lo_val + frac * (hi_val - lo_val)
    } else {
        lo_val
    };
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// A localizer bound to its embedded anchor set and a resolved bandwidth.
#[derive(Clone)]
pub struct FittedLocalizer {
    kernel: KernelKind,
    bandwidth: f64,
    embedding: Arc<dyn Embedding>,
    anchors: Features,
    batch_fraction: f64,
}

impl fmt::Debug for FittedLocalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FittedLocalizer")
            .field("kernel", &self.kernel)
            .field("bandwidth", &self.bandwidth)
            .field("n_anchors", &self.anchors.len())
            .field("batch_fraction", &self.batch_fraction)
            .finish_non_exhaustive()
    }
}

/// Anchor indices participating in one calibrate call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorBatch {
    indices: Vec<usize>,
}

impl AnchorBatch {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Normalized weights over an [`AnchorBatch`], aligned with its indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub weights: Vec<f64>,
    /// Set when every kernel value vanished and uniform weights were used.
    pub uniform_fallback: bool,
}

impl FittedLocalizer {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn full_batch(&self) -> AnchorBatch {
        AnchorBatch {
            indices: (0..self.anchors.len()).collect(),
        }
    }

    /// Uniform subset of `⌈batch_fraction·n⌉` anchors drawn without
    /// replacement, returned in ascending index order. The full set is
    /// returned without touching `rng` when the fraction is 1.
    pub fn draw_batch(&self, rng: &mut SeededRng) -> AnchorBatch {
        let n = self.anchors.len();
        if self.batch_fraction >= 1.0 {
            return self.full_batch();
        }
        let size = ((self.batch_fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut indices = index::sample(rng, n, size).into_vec();
        indices.sort_unstable();
        AnchorBatch { indices }
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.embedding.embed(x)
    }

    /// Weights of the batch anchors around `query` (in input space).
    pub fn weights(&self, batch: &AnchorBatch, query: &[f64]) -> LocalWeights {
        let q = self.embedding.embed(query);
        let scaled: Vec<f64> = batch
            .indices
            .iter()
            .map(|&i| euclidean(self.anchors.row(i), &q) / self.bandwidth)
            .collect();
        normalized_kernel_weights(self.kernel, &scaled)
    }
}

/// Normalizes `K(u_i)` to sum to one. The Gaussian is evaluated relative to
/// the closest anchor so distant queries do not underflow to all-zero.
fn normalized_kernel_weights(kernel: KernelKind, scaled: &[f64]) -> LocalWeights {
    let raw: Vec<f64> = match kernel {
        KernelKind::Gaussian => {
            let u_min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
            let base = u_min * u_min;
            scaled.iter().map(|&u| (-0.5 * (u * u - base)).exp()).collect()
        }
        _ => scaled.iter().map(|&u| kernel.value(u)).collect(),
    };
    normalize_or_uniform(raw)
}

fn normalize_or_uniform(mut raw: Vec<f64>) -> LocalWeights {
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter_mut().for_each(|w| *w /= total);
        LocalWeights {
            weights: raw,
            uniform_fallback: false,
        }
    } else {
        let n = raw.len();
        LocalWeights {
            weights: vec![1.0 / n as f64; n],
            uniform_fallback: true,
        }
    }
}

/// Scores of a batch pre-sorted once so each query's CDF is built in
/// linear time.
#[derive(Debug, Clone)]
pub struct SortedScores {
    order: Vec<usize>,
    sorted: Vec<f64>,
}

impl SortedScores {
    /// `scores` aligned with the batch (position `k` belongs to
    /// `batch.indices()[k]`).
    pub fn new(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let sorted = order.iter().map(|&k| scores[k]).collect();
        Self { order, sorted }
    }

    /// Gathers the batch scores from the full anchor score vector.
    pub fn for_batch(batch: &AnchorBatch, anchor_scores: &[f64]) -> Self {
        let scores: Vec<f64> = batch.indices.iter().map(|&i| anchor_scores[i]).collect();
        Self::new(&scores)
    }

    pub fn cdf(&self, weights: &LocalWeights) -> Result<WeightedEmpiricalCdf> {
        let w = self.order.iter().map(|&k| weights.weights[k]).collect();
        WeightedEmpiricalCdf::from_sorted(self.sorted.clone(), w)
    }
}

/// Weights over all `anchors` for one query; anchors left out of the
/// mini-batch get weight zero.
pub fn localize_weights(
    loc: &Localizer,
    anchors: &Features,
    query: &[f64],
    rng: &mut SeededRng,
) -> Result<LocalWeights> {
    let fitted = loc.fit(anchors)?;
    let batch = fitted.draw_batch(rng);
    let local = fitted.weights(&batch, query);
    let mut weights = vec![0.0; anchors.len()];
    for (&i, &w) in batch.indices.iter().zip(&local.weights) {
        weights[i] = w;
    }
    Ok(LocalWeights {
        weights,
        uniform_fallback: local.uniform_fallback,
    })
}

/// Localized CDF of `scores` around `query`, plus the uniform-fallback flag.
pub fn conditional_cdf(
    loc: &Localizer,
    anchors: &Features,
    scores: &[f64],
    query: &[f64],
    rng: &mut SeededRng,
) -> Result<(WeightedEmpiricalCdf, bool)> {
    if anchors.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "anchors and scores",
            left: anchors.len(),
            right: scores.len(),
        });
    }
    let fitted = loc.fit(anchors)?;
    let batch = fitted.draw_batch(rng);
    let local = fitted.weights(&batch, query);
    let cdf = SortedScores::for_batch(&batch, scores).cdf(&local)?;
    Ok((cdf, local.uniform_fallback))
}
