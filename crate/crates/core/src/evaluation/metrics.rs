use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::methods::Interval;

fn check_lengths(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { what, left, right });
    }
    Ok(())
}

/// Fraction of `y_i ∈ [lower_i, upper_i]`.
pub fn coverage_rate(bands: &[Interval], y: &[f64]) -> Result<f64> {
    check_lengths("bands and responses", bands.len(), y.len())?;
    if bands.is_empty() {
        return Err(Error::EmptySample);
    }
    let covered = bands.iter().zip(y).filter(|(b, &v)| b.contains(v)).count();
    Ok(covered as f64 / bands.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthSummary {
    /// Mean width of the finite bands, divided by the normalizer if any;
    /// `+∞` when no band is finite.
    pub mean: f64,
    pub finite: usize,
    /// Bands with an infinite end, excluded from `mean`.
    pub infinite: usize,
}

pub fn average_length(bands: &[Interval], normalizer: Option<f64>) -> LengthSummary {
    let finite: Vec<f64> = bands.iter().filter(|b| b.is_finite()).map(Interval::width).collect();
    let infinite = bands.len() - finite.len();
    let mut mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    if let Some(z) = normalizer {
        mean /= z;
    }
    LengthSummary {
        mean,
        finite: finite.len(),
        infinite,
    }
}

/// Pearson coefficient, or `Undefined` when a side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    /// The coefficient, with `Undefined` reported as 0.
    pub fn value_or_zero(self) -> f64 {
        match self {
            Self::Defined(r) => r,
            Self::Undefined => 0.0,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Self::Defined(_))
    }
}

impl Serialize for Correlation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Defined(r) => s.serialize_f64(*r),
            Self::Undefined => s.serialize_none(),
        }
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation> {
    check_lengths("pearson inputs", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Ok(Correlation::Undefined);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // spread at rounding level (e.g. μ̂(x) ± d widths) counts as constant
    let flat = |ss: f64, v: &[f64]| {
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        ss.sqrt() <= 1e-12 * scale * n.sqrt()
    };
    if flat(saa, a) || flat(sbb, b) {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Correlation between interval width and the 0/1 coverage indicator.
pub fn pearson_interval_correlation(widths: &[f64], covered: &[bool]) -> Result<Correlation> {
    let indicator: Vec<f64> = covered.iter().map(|&c| f64::from(u8::from(c))).collect();
    pearson(widths, &indicator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStats {
    pub coverage: f64,
    pub avg_length: f64,
    pub count: usize,
}

/// Coverage and mean finite length per group label.
pub fn group_report<L: Ord + Clone>(bands: &[Interval], y: &[f64], labels: &[L]) -> Result<BTreeMap<L, GroupStats>> {
    check_lengths("bands and responses", bands.len(), y.len())?;
    check_lengths("bands and labels", bands.len(), labels.len())?;
    let mut members: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        members.entry(l.clone()).or_default().push(i);
    }
    members
        .into_iter()
        .map(|(label, idx)| {
            let b: Vec<Interval> = idx.iter().map(|&i| bands[i]).collect();
            let v: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let stats = GroupStats {
                coverage: coverage_rate(&b, &v)?,
                avg_length: average_length(&b, None).mean,
                count: idx.len(),
            };
            Ok((label, stats))
        })
        .collect()
}

/// Headline metrics for one band over a test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub coverage: f64,
    pub avg_length: f64,
    pub infinite_bands: usize,
    pub pearson: Correlation,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_group: BTreeMap<String, GroupStats>,
}

impl MetricsReport {
    pub fn compute(bands: &[Interval], y: &[f64], normalizer: Option<f64>, labels: Option<&[String]>) -> Result<Self> {
        let coverage = coverage_rate(bands, y)?;
        let length = average_length(bands, normalizer);
        let widths: Vec<f64> = bands.iter().map(Interval::width).collect();
        let covered: Vec<bool> = bands.iter().zip(y).map(|(b, &v)| b.contains(v)).collect();
        let pearson = if bands.len() >= 2 {
            pearson_interval_correlation(&widths, &covered)?
        } else {
            Correlation::Undefined
        };
        let per_group = match labels {
            Some(l) => group_report(bands, y, l)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            coverage,
            avg_length: length.mean,
            infinite_bands: length.infinite,
            pearson,
            per_group,
        })
    }
}
