//! Simulated regression families.
//!
//! | family  | response                                                         |
//! |---------|------------------------------------------------------------------|
//! | sim1    | `sin²x + 0.6·sin 2x + ε`                                         |
//! | sim2    | `2·sin²x + 0.15·x·ε`                                             |
//! | sim3    | `Pois(sin²x + 0.1) + 0.08·x·ε + 25·1{u < 0.01} + ε`               |
//! | hetero  | `x·ε`                                                            |
//! | bimodal | `sin x ± 2 + 0.5·ε`, sign a fair coin                             |
//!
//! `ε ~ N(0, 1)` and `u ~ U[0, 1]`; `noise_scale` multiplies every `ε` term,
//! the spike and the bimodal offset. With `binary_noise` the `ε` of sim3 is
//! a fair 0/1 draw instead. Covariates are uniform on `x_range`; under a
//! covariate shift the training covariates are Gaussian around the centre
//! of the range and test covariates are a Beta draw mapped onto the range.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, streams, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sim1,
    Sim2,
    Sim3,
    Hetero,
    Bimodal,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sim1" => Ok(Self::Sim1),
            "sim2" => Ok(Self::Sim2),
            "sim3" => Ok(Self::Sim3),
            "hetero" => Ok(Self::Hetero),
            "bimodal" | "bimodalmixture" => Ok(Self::Bimodal),
            _ => Err(Error::Unknown {
                kind: "family",
                name: name.to_string(),
            }),
        }
    }
}

/// Gaussian training covariates, Beta test covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateShift {
    /// `(a, b)` of the Beta distribution for test covariates.
    pub test_beta: [f64; 2],
    /// Standard deviation of the training covariates as a fraction of the
    /// range width.
    #[serde(default = "default_train_sd_fraction")]
    pub train_sd_fraction: f64,
}

fn default_train_sd_fraction() -> f64 {
    0.25
}

fn default_x_range() -> [f64; 2] {
    [0.0, 5.0]
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub family: Family,
    pub n: usize,
    #[serde(default = "default_x_range")]
    pub x_range: [f64; 2],
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default)]
    pub binary_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<CovariateShift>,
}

impl SyntheticSpec {
    pub fn new(family: Family, n: usize) -> Self {
        Self {
            family,
            n,
            x_range: default_x_range(),
            noise_scale: 1.0,
            binary_noise: false,
            shift: None,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = [lo, hi];
        self
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("dataset.n must be at least 1".into()));
        }
        let [lo, hi] = self.x_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("dataset.x_range [{lo}, {hi}] is degenerate")));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "dataset.noise_scale must be non-negative, got {}",
                self.noise_scale
            )));
        }
        if let Some(shift) = &self.shift {
            let [a, b] = shift.test_beta;
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Config(format!(
                    "dataset.shift.test_beta must be positive, got [{a}, {b}]"
                )));
            }
            if !(shift.train_sd_fraction > 0.0) {
                return Err(Error::Config("dataset.shift.train_sd_fraction must be positive".into()));
            }
        }
        Ok(())
    }

    /// Draws `n` training-distribution points.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = seeded(seed, streams::DATA);
        let x: Vec<f64> = match &self.shift {
            None => (0..self.n).map(|_| self.uniform_x(&mut rng)).collect(),
            Some(shift) => {
                let [lo, hi] = self.x_range;
                let normal = Normal::new(0.5 * (lo + hi), shift.train_sd_fraction * (hi - lo))
                    .map_err(|e| Error::Config(e.to_string()))?;
                (0..self.n).map(|_| normal.sample(&mut rng)).collect()
            }
        };
        self.finish(x, &mut rng)
    }

    /// Draws `n` test points; identical in law to [`generate`](Self::generate)
    /// unless a covariate shift is configured.
    pub fn generate_test(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = seeded(seed, streams::TEST_DATA);
        let x: Vec<f64> = match &self.shift {
            None => (0..n).map(|_| self.uniform_x(&mut rng)).collect(),
            Some(shift) => {
                let [a, b] = shift.test_beta;
                let beta = Beta::new(a, b).map_err(|e| Error::Config(e.to_string()))?;
                let [lo, hi] = self.x_range;
                (0..n).map(|_| lo + (hi - lo) * beta.sample(&mut rng)).collect()
            }
        };
        self.finish(x, &mut rng)
    }

    fn uniform_x(&self, rng: &mut SeededRng) -> f64 {
        let [lo, hi] = self.x_range;
        rng.random_range(lo..hi)
    }

    fn finish(&self, x: Vec<f64>, rng: &mut SeededRng) -> Result<Dataset> {
        let y = x.iter().map(|&xi| self.response(xi, rng)).collect();
        Dataset::from_column(x, y)
    }

    fn response(&self, x: f64, rng: &mut SeededRng) -> f64 {
        let s = self.noise_scale;
        let sin2 = x.sin().powi(2);
        match self.family {
            Family::Sim1 => sin2 + 0.6 * (2.0 * x).sin() + s * gaussian(rng),
            Family::Sim2 => 2.0 * sin2 + 0.15 * x * s * gaussian(rng),
            Family::Sim3 => {
                let count = Poisson::new(sin2 + 0.1).expect("positive rate").sample(rng);
                let eps = if self.binary_noise {
                    f64::from(u8::from(rng.random_bool(0.5)))
                } else {
                    gaussian(rng)
                };
                let spike = if rng.random::<f64>() < 0.01 { 25.0 } else { 0.0 };
                count + 0.08 * x * s * eps + s * spike + s * eps
            }
            Family::Hetero => s * x * gaussian(rng),
            Family::Bimodal => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                x.sin() + s * (2.0 * sign + 0.5 * gaussian(rng))
            }
        }
    }

    /// Noise-free part of the response where it is a closed form.
    pub fn signal(&self, x: f64) -> f64 {
        let sin2 = x.sin().powi(2);
        match self.family {
            Family::Sim1 => sin2 + 0.6 * (2.0 * x).sin(),
            Family::Sim2 => 2.0 * sin2,
            Family::Sim3 => sin2 + 0.1,
            Family::Hetero => 0.0,
            Family::Bimodal => x.sin(),
        }
    }

    /// Exact conditional quantile of `Y | X = x` for the Gaussian families.
    pub fn true_quantile(&self, x: f64, level: f64) -> Option<f64> {
        let z = StatNormal::standard().inverse_cdf(level);
        let s = self.noise_scale;
        match self.family {
            Family::Sim1 => Some(self.signal(x) + s * z),
            Family::Sim2 => Some(self.signal(x) + (0.15 * x * s).abs() * z),
            Family::Hetero => Some((x * s).abs() * z),
            Family::Sim3 | Family::Bimodal => None,
        }
    }
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Shorthand for [`SyntheticSpec::generate`].
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.generate(seed)
}
