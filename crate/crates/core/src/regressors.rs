//! Built-in base models: a zero predictor, affine least squares, affine
//! quantile regression and k-nearest-neighbour mean/quantile.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::quantile::QuantileLevel;

/// A fitted model mapping a feature vector to a real prediction.
pub trait Predictor: Send + Sync + fmt::Debug {
    fn predict(&self, x: &[f64]) -> f64;
}

pub type SharedPredictor = Arc<dyn Predictor>;

/// Optimizer and penalty settings for the linear models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 2000,
            ridge_lambda: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "model.train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("model.train.epochs must be at least 1".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "model.train.ridge_lambda must be non-negative, got {}",
                self.ridge_lambda
            )));
        }
        Ok(())
    }
}

/// Which statistic of the neighbours' responses a k-NN model reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnnStatistic {
    Mean,
    Quantile(QuantileLevel),
}

/// Variant tag for the built-in regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressorKind {
    ConstantZero,
    LinearMean,
    LinearQuantile(QuantileLevel),
    KnnMean(usize),
    KnnQuantile(usize, QuantileLevel),
}

impl RegressorKind {
    pub fn fit(&self, data: &Dataset, cfg: &TrainConfig) -> Result<SharedPredictor> {
        Ok(match *self {
            Self::ConstantZero => Arc::new(ConstantZero),
            Self::LinearMean => Arc::new(fit_linear_mean(data, cfg)?),
            Self::LinearQuantile(level) => Arc::new(fit_linear_quantile(data, level, cfg)?),
            Self::KnnMean(k) => Arc::new(KnnModel::fit(data, k, KnnStatistic::Mean)?),
            Self::KnnQuantile(k, level) => Arc::new(KnnModel::fit(data, k, KnnStatistic::Quantile(level))?),
        })
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ConstantZero => write!(f, "constant_zero"),
            Self::LinearMean => write!(f, "linear_mean"),
            Self::LinearQuantile(l) => write!(f, "linear_quantile({})", l.value()),
            Self::KnnMean(k) => write!(f, "knn_mean({k})"),
            Self::KnnQuantile(k, l) => write!(f, "knn_quantile({k}, {})", l.value()),
        }
    }
}

/// Predicts zero everywhere, which turns `V = Y − μ̂(X)` into `V = Y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantZero;

impl Predictor for ConstantZero {
    fn predict(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// `f(x) = θ_0 + Σ θ_j x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Intercept first, then one slope per feature.
    pub theta: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: vec![0.0; dim + 1],
        }
    }

    pub fn intercept(&self) -> f64 {
        self.theta[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.theta[1..]
    }
}

impl Predictor for LinearModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.theta[0] + self.theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
    }
}

/// `ρ_α(y, ŷ) = α(y − ŷ)·1{y > ŷ} + (1 − α)(ŷ − y)·1{y ≤ ŷ}`.
pub fn pinball_loss(level: QuantileLevel, y: f64, yhat: f64) -> f64 {
    let a = level.value();
    if y > yhat {
        a * (y - yhat)
    } else {
        (1.0 - a) * (yhat - y)
    }
}

/// Mean pinball loss over `data` plus `λ‖slopes‖²`.
pub fn quantile_objective(model: &LinearModel, data: &Dataset, level: QuantileLevel, ridge_lambda: f64) -> f64 {
    let loss: f64 = (0..data.len())
        .map(|i| pinball_loss(level, data.y(i), model.predict(data.x(i))))
        .sum::<f64>()
        / data.len() as f64;
    loss + ridge_lambda * model.slopes().iter().map(|w| w * w).sum::<f64>()
}

/// Affine quantile regression by full-batch subgradient descent from `θ = 0`.
///
/// Runs `cfg.epochs` steps at a fixed learning rate and returns the iterate
/// with the lowest objective seen, so the result never does worse than the
/// zero model on the training set.
pub fn fit_linear_quantile(data: &Dataset, level: QuantileLevel, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    data.ensure_finite()?;
    let d = data.dim();
    let n = data.len() as f64;
    let a = level.value();

    let mut model = LinearModel::zeros(d);
    let mut best = model.clone();
    let mut best_obj = quantile_objective(&model, data, level, cfg.ridge_lambda);
    let mut grad = vec![0.0; d + 1];
    for _ in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for i in 0..data.len() {
            let x = data.x(i);
            let y = data.y(i);
            let yhat = model.predict(x);
            // at the kink y == ŷ the 1{y ≤ ŷ} branch applies
            let slope = if y > yhat { -a } else { 1.0 - a };
            loss += pinball_loss(level, y, yhat);
            grad[0] += slope;
            for (g, v) in grad[1..].iter_mut().zip(x) {
                *g += slope * v;
            }
        }
        let penalty: f64 = model.slopes().iter().map(|w| w * w).sum::<f64>() * cfg.ridge_lambda;
        let obj = loss / n + penalty;
        if obj < best_obj {
            best_obj = obj;
            best = model.clone();
        }
        model.theta[0] -= cfg.learning_rate * grad[0] / n;
        for (w, g) in model.theta[1..].iter_mut().zip(&grad[1..]) {
            *w -= cfg.learning_rate * (g / n + 2.0 * cfg.ridge_lambda * *w);
        }
    }
    let obj = quantile_objective(&model, data, level, cfg.ridge_lambda);
    if obj < best_obj {
        best = model;
    }
    Ok(best)
}

/// Ridge-penalized least squares via the normal equations; the intercept is
/// not penalized.
pub fn fit_linear_mean(data: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    data.ensure_finite()?;
    let d = data.dim();
    let p = d + 1;
    let design = DMatrix::from_fn(data.len(), p, |i, j| if j == 0 { 1.0 } else { data.x(i)[j - 1] });
    let y = DVector::from_column_slice(&data.response);
    let mut gram = design.transpose() * &design;
    for j in 1..p {
        gram[(j, j)] += cfg.ridge_lambda;
    }
    let rhs = design.transpose() * y;

    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0_f64, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-12 {
        return Err(Error::RankDeficient);
    }
    let theta = gram.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs);
    Ok(LinearModel {
        theta: theta.iter().copied().collect(),
    })
}

/// Brute-force k-nearest-neighbour regressor.
#[derive(Debug, Clone)]
pub struct KnnModel {
    data: Dataset,
    k: usize,
    statistic: KnnStatistic,
}

impl KnnModel {
    pub fn fit(data: &Dataset, k: usize, statistic: KnnStatistic) -> Result<Self> {
        if k == 0 || k > data.len() {
            return Err(Error::TooManyNeighbors { k, n: data.len() });
        }
        data.ensure_finite()?;
        Ok(Self {
            data: data.clone(),
            k,
            statistic,
        })
    }
}

impl Predictor for KnnModel {
    fn predict(&self, x: &[f64]) -> f64 {
        knn_statistic(&self.data, self.k, self.statistic, x)
    }
}

/// k-NN prediction at `query`. Distance ties go to the lower index.
pub fn knn_predict(data: &Dataset, k: usize, statistic: KnnStatistic, query: &[f64]) -> Result<f64> {
    if k == 0 || k > data.len() {
        return Err(Error::TooManyNeighbors { k, n: data.len() });
    }
    if query.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: query.len(),
        });
    }
    Ok(knn_statistic(data, k, statistic, query))
}

fn knn_statistic(data: &Dataset, k: usize, statistic: KnnStatistic, query: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = (0..data.len()).map(|i| (euclidean(data.x(i), query), i)).collect();
    let by_dist_then_index = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist_then_index);
    }
    let mut ys: Vec<f64> = dist[..k].iter().map(|&(_, i)| data.y(i)).collect();
    match statistic {
        KnnStatistic::Mean => ys.iter().sum::<f64>() / k as f64,
        KnnStatistic::Quantile(level) => {
            let rank = ((level.value() * k as f64).ceil() as usize).clamp(1, k);
            ys.sort_by(f64::total_cmp);
            ys[rank - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn lvl(x: f64) -> QuantileLevel {
        QuantileLevel::new(x).unwrap()
    }

    #[test]
    fn pinball_examples() {
        assert!((pinball_loss(lvl(0.9), 1.0, 0.0) - 0.9).abs() < 1e-15);
        assert_eq!(pinball_loss(lvl(0.3), 2.5, 2.5), 0.0);
        assert_eq!(pinball_loss(lvl(0.5), 0.0, 4.0), 2.0);
    }

    #[test]
    fn quantile_fit_of_constant_response() {
        let x: Vec<f64> = (0..200).map(|i| f64::from(i) / 200.0).collect();
        let data = Dataset::from_column(x, vec![3.0; 200]).unwrap();
        let m = fit_linear_quantile(&data, lvl(0.5), &TrainConfig::default()).unwrap();
        assert!((m.intercept() - 3.0).abs() < 0.05, "{m:?}");
        assert!(m.slopes()[0].abs() < 0.05, "{m:?}");
    }

    #[test]
    fn quantile_fit_of_exact_line() {
        let x: Vec<f64> = (0..200).map(|i| f64::from(i) / 100.0).collect();
        let y = x.iter().map(|v| 2.0 * v).collect();
        let data = Dataset::from_column(x, y).unwrap();
        let m = fit_linear_quantile(&data, lvl(0.5), &TrainConfig::default()).unwrap();
        assert!((m.slopes()[0] - 2.0).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn quantile_fit_recovers_normal_quantile() {
        let mut rng = crate::rng::seeded(11, 0);
        let x: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::from_column(x, y).unwrap();
        let m = fit_linear_quantile(&data, lvl(0.9), &TrainConfig::default()).unwrap();
        let at_mid = m.predict(&[0.5]);
        assert!((at_mid - 1.2816).abs() < 0.1, "{m:?}");
    }

    #[test]
    fn quantile_fit_never_worse_than_zero() {
        let data = Dataset::from_column(vec![0.0, 1.0, 2.0, 3.0], vec![10.0, -4.0, 7.0, 1.0]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 5.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let m = fit_linear_quantile(&data, lvl(0.7), &cfg).unwrap();
        let zero = LinearModel::zeros(1);
        assert!(quantile_objective(&m, &data, lvl(0.7), 0.0) <= quantile_objective(&zero, &data, lvl(0.7), 0.0));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let data = Dataset::from_column(vec![0.0, f64::INFINITY], vec![1.0, 2.0]).unwrap();
        assert!(fit_linear_quantile(&data, lvl(0.5), &TrainConfig::default()).is_err());
        assert!(fit_linear_mean(&data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn intercept_only_fit_is_monotone_in_level() {
        let mut rng = crate::rng::seeded(5, 0);
        let y: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::new(crate::data::Features::new(vec![0.0; 500], 1).unwrap(), y).unwrap();
        let cfg = TrainConfig::default();
        let lo = fit_linear_quantile(&data, lvl(0.1), &cfg).unwrap().intercept();
        let hi = fit_linear_quantile(&data, lvl(0.9), &cfg).unwrap().intercept();
        assert!(hi + 0.05 >= lo);
        assert!(hi > 1.0 && lo < -1.0);
    }

    #[test]
    fn linear_mean_examples() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let data = Dataset::from_column(x.clone(), vec![5.0; 10]).unwrap();
        let m = fit_linear_mean(&data, &TrainConfig::default()).unwrap();
        assert!((m.intercept() - 5.0).abs() < 1e-8 && m.slopes()[0].abs() < 1e-8);

        let data = Dataset::from_column(x.clone(), x.iter().map(|v| 2.0 * v).collect()).unwrap();
        let m = fit_linear_mean(&data, &TrainConfig::default()).unwrap();
        assert!((m.slopes()[0] - 2.0).abs() < 1e-8 && m.intercept().abs() < 1e-8);
    }

    #[test]
    fn linear_mean_rank_deficient() {
        let f = crate::data::Features::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let data = Dataset::new(f, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            fit_linear_mean(&data, &TrainConfig::default()),
            Err(Error::RankDeficient)
        ));
        let ridge = TrainConfig {
            ridge_lambda: 0.1,
            ..TrainConfig::default()
        };
        assert!(fit_linear_mean(&data, &ridge).is_ok());
    }

    #[test]
    fn knn_examples() {
        let data = Dataset::from_column(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(knn_predict(&data, 2, KnnStatistic::Mean, &[0.4]).unwrap(), 0.5);
        assert_eq!(knn_predict(&data, 4, KnnStatistic::Mean, &[9.0]).unwrap(), 1.5);
        assert_eq!(knn_predict(&data, 1, KnnStatistic::Mean, &[2.0]).unwrap(), 2.0);
        // query 1.5 is equidistant from 1 and 2: lower index wins
        assert_eq!(knn_predict(&data, 1, KnnStatistic::Mean, &[1.5]).unwrap(), 1.0);
        assert_eq!(
            knn_predict(&data, 3, KnnStatistic::Quantile(lvl(0.5)), &[1.0]).unwrap(),
            1.0
        );
        assert!(matches!(
            knn_predict(&data, 5, KnnStatistic::Mean, &[0.0]),
            Err(Error::TooManyNeighbors { .. })
        ));
    }
}
