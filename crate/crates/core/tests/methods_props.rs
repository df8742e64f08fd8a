use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use slcp::evaluation::{coverage_rate, pearson, Family, SyntheticSpec};
use slcp::localizer::{Bandwidth, KernelKind, Localizer};
use slcp::methods::{
    generalized_band, generalized_calibrate, split_data, split_three, AdditiveExpectation, AsymmetricSplitConformal,
    BaseModel, CalibratedBand, CalibrationContext, FittingModelSource, Interval, LocalizedQuantileModel, MethodConfig,
    MethodRegistry, ModelFamily, ScoreInversion, Slcp, SplitIndices, Tails, ThetaQuantile, Vanilla,
};
use slcp::quantile::{conformal_quantile, QuantileLevel, WeightedEmpiricalCdf};
use slcp::regressors::{ConstantZero, Predictor, RegressorKind, SharedPredictor, TrainConfig};
use slcp::rng::seeded;
use slcp::{Dataset, Features};

fn q(level: f64) -> QuantileLevel {
    QuantileLevel::new(level).unwrap()
}

fn zero() -> SharedPredictor {
    Arc::new(ConstantZero)
}

#[derive(Debug)]
struct Line(f64, f64);

impl Predictor for Line {
    fn predict(&self, x: &[f64]) -> f64 {
        self.0 + self.1 * x[0]
    }
}

fn sim2(n: usize, seed: u64) -> (Dataset, SplitIndices) {
    (
        SyntheticSpec::new(Family::Sim2, n).generate(seed).unwrap(),
        split_data(n, 0.6, seed).unwrap(),
    )
}

// Brute-force SLCP: naive kernel weights, a scan for each weighted quantile
// and the correction rank in integer arithmetic.
fn oracle_slcp(
    mean: &dyn Predictor,
    data: &Dataset,
    split: &SplitIndices,
    kernel: fn(f64) -> f64,
    h: f64,
    tails: (u64, u64),
    queries: &[f64],
) -> Vec<Interval> {
    let train: Vec<(f64, f64)> = split.train.iter().map(|&i| (data.x(i)[0], data.y(i))).collect();
    let up: Vec<f64> = train.iter().map(|&(x, y)| y - mean.predict(&[x])).collect();
    let down: Vec<f64> = train.iter().map(|&(x, y)| mean.predict(&[x]) - y).collect();
    let local_q = |scores: &[f64], x: f64, level: f64| -> f64 {
        let raw: Vec<f64> = train.iter().map(|&(a, _)| kernel((a - x).abs() / h)).collect();
        let total: f64 = raw.iter().sum();
        let mut pairs: Vec<(f64, f64)> = scores.iter().copied().zip(raw.iter().map(|w| w / total)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        for (v, w) in pairs {
            cum += w;
            if cum >= level {
                return v;
            }
        }
        unreachable!()
    };
    let correction = |scores: &[f64], side: fn(f64, f64) -> f64, permille: u64| -> f64 {
        let level = 1.0 - permille as f64 / 1000.0;
        let mut r: Vec<f64> = split
            .cal
            .iter()
            .map(|&i| {
                let (x, y) = (data.x(i)[0], data.y(i));
                side(y, mean.predict(&[x])) - local_q(scores, x, level)
            })
            .collect();
        r.sort_by(f64::total_cmp);
        let n = r.len() as u64;
        let k = ((1000 - permille) * (n + 1)).div_ceil(1000) as usize;
        if k > r.len() {
            f64::INFINITY
        } else {
            r[k - 1]
        }
    };
    let (lo_pm, hi_pm) = tails;
    let c_up = correction(&up, |y, m| y - m, hi_pm);
    let c_lo = correction(&down, |y, m| m - y, lo_pm);
    queries
        .iter()
        .map(|&x| {
            let m = mean.predict(&[x]);
            Interval::new(
                m - local_q(&down, x, 1.0 - lo_pm as f64 / 1000.0) - c_lo,
                m + local_q(&up, x, 1.0 - hi_pm as f64 / 1000.0) + c_up,
            )
        })
        .collect()
}

#[test]
fn slcp_matches_a_brute_force_oracle() {
    let (data, split) = sim2(300, 1);
    let mean = Line(0.8, 0.1);
    let queries: Vec<f64> = (0..60).map(|i| i as f64 / 12.0).collect();
    let tails = Tails::new(0.05, 0.05).unwrap();
    // Boxcar weights are exactly 1/count on both sides, so the match is exact.
    let boxcar = Localizer::new(KernelKind::Boxcar, Bandwidth::Fixed(0.7));
    let band = Slcp::calibrate(
        BaseModel::Mean(Arc::new(Line(0.8, 0.1))),
        &boxcar,
        &data,
        &split,
        tails,
        &mut seeded(0, 4),
    )
    .unwrap()
    .predict(&Features::from_column(queries.clone()))
    .unwrap();
    let oracle = oracle_slcp(
        &mean,
        &data,
        &split,
        |u| if u <= 1.0 { 0.5 } else { 0.0 },
        0.7,
        (50, 50),
        &queries,
    );
    assert_eq!(band.intervals, oracle);

    let gauss = Localizer::new(KernelKind::Gaussian, Bandwidth::Fixed(0.4));
    let band = Slcp::calibrate(
        BaseModel::Mean(Arc::new(Line(0.8, 0.1))),
        &gauss,
        &data,
        &split,
        tails,
        &mut seeded(0, 4),
    )
    .unwrap()
    .predict(&Features::from_column(queries.clone()))
    .unwrap();
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let oracle = oracle_slcp(&mean, &data, &split, phi, 0.4, (50, 50), &queries);
    for (a, b) in band.intervals.iter().zip(&oracle) {
        assert!(
            (a.lower - b.lower).abs() < 1e-12 && (a.upper - b.upper).abs() < 1e-12,
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn full_batch_slcp_is_rng_free() {
    let (data, split) = sim2(400, 2);
    let tails = Tails::even(q(0.1));
    let loc = Localizer::default().with_batch_fraction(1.0).unwrap();
    let queries = Features::from_column((0..50).map(|i| i as f64 / 10.0).collect());
    let bands: Vec<Vec<Interval>> = [3u64, 4, 5]
        .iter()
        .map(|&s| {
            Slcp::calibrate(BaseModel::Mean(zero()), &loc, &data, &split, tails, &mut seeded(s, 4))
                .unwrap()
                .predict(&queries)
                .unwrap()
                .intervals
        })
        .collect();
    assert_eq!(bands[0], bands[1]);
    assert_eq!(bands[1], bands[2]);
}

#[test]
fn constant_localized_quantile_cancels_into_asymmetric_split() {
    // Every training score is exactly 0.4 above the base, so the localized
    // CDF is a point mass for every query and the recentring cancels.
    let n_train = 50;
    let cal_y = [
        1.0, -0.3, 2.5, 0.9, 1.7, -1.1, 0.2, 3.1, 0.6, -0.8, 1.2, 2.2, 0.0, 0.5, -2.0, 1.9, 0.35, 2.8, -0.45,
    ];
    let mut x: Vec<f64> = (0..n_train).map(|i| i as f64 / 10.0).collect();
    let mut y = vec![0.4; n_train];
    x.extend((0..cal_y.len()).map(|i| i as f64 / 4.0));
    y.extend(cal_y);
    let data = Dataset::from_column(x, y).unwrap();
    let split = SplitIndices::new((0..n_train).collect(), (n_train..data.len()).collect()).unwrap();
    // n_cal = 19 keeps ⌈0.9·20⌉ = 18 ≤ n, so augmentation does not bite
    let tails = Tails::new(0.1, 0.1).unwrap();
    for kernel in [KernelKind::Gaussian, KernelKind::Boxcar, KernelKind::Epanechnikov] {
        let loc = Localizer::new(kernel, Bandwidth::Median);
        let slcp = Slcp::calibrate(BaseModel::Mean(zero()), &loc, &data, &split, tails, &mut seeded(0, 4)).unwrap();
        let asym = AsymmetricSplitConformal::calibrate(zero(), &data, &split, tails).unwrap();
        let plain_up = conformal_quantile(&cal_y, q(0.9), false).unwrap();
        assert!((slcp.upper_correction() - (plain_up - 0.4)).abs() < 1e-12);
        for i in 0..40 {
            let xq = [i as f64 / 8.0 - 1.0];
            let (a, b) = (slcp.interval(&xq).unwrap(), asym.interval(&xq).unwrap());
            assert!(
                (a.lower - b.lower).abs() < 1e-12 && (a.upper - b.upper).abs() < 1e-12,
                "{a:?} {b:?}"
            );
        }
    }
}

#[test]
fn permuting_calibration_rows_changes_nothing() {
    let n = 240;
    let data = SyntheticSpec::new(Family::Sim1, n).generate(9).unwrap();
    let split = split_data(n, 0.5, 9).unwrap();
    let mut order = split.cal.clone();
    order.shuffle(&mut seeded(9, 50));
    let mut rows: Vec<usize> = (0..n).collect();
    for (&dst, &src) in split.cal.iter().zip(&order) {
        rows[dst] = src;
    }
    let permuted = data.select(&rows);
    let queries = Features::from_column((0..30).map(|i| i as f64 / 6.0).collect());
    let registry = MethodRegistry::builtin();
    let configs = [
        r#"{"kind": "split", "alpha": 0.1}"#,
        r#"{"kind": "asym", "alpha": 0.1, "alpha_lo": 0.03}"#,
        r#"{"kind": "cqr", "alpha": 0.1}"#,
        r#"{"kind": "slcp", "alpha": 0.1, "batch_fraction": 0.5}"#,
        r#"{"kind": "slcp", "alpha": 0.1, "base": "quantile", "kernel": "epanechnikov"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "theta_quantile"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "multiplicative_quantile"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "additive_expectation"}"#,
    ];
    for text in configs {
        let cfg: MethodConfig = serde_json::from_str(text).unwrap();
        let method = registry.build(&cfg).unwrap();
        let band = |d: &Dataset| {
            let models = FittingModelSource::new(ModelFamily::Knn { k: 15 }, d, &split);
            let ctx = CalibrationContext {
                data: d,
                split: &split,
                models: &models,
            };
            method
                .calibrate(&ctx, &mut seeded(1, 4))
                .unwrap()
                .predict(&queries)
                .unwrap()
        };
        assert_eq!(band(&data), band(&permuted), "{text}");
    }
}

#[test]
fn slcp_widths_follow_the_noise_scale() {
    let (data, split) = sim2(2000, 12);
    let mean = RegressorKind::KnnMean(30)
        .fit(&data.select(&split.train), &TrainConfig::default())
        .unwrap();
    let slcp = Slcp::calibrate(
        BaseModel::Mean(mean),
        &Localizer::default(),
        &data,
        &split,
        Tails::even(q(0.1)),
        &mut seeded(0, 4),
    )
    .unwrap();
    let grid: Vec<f64> = (0..200).map(|i| 5.0 * i as f64 / 199.0).collect();
    let band = slcp.predict(&Features::from_column(grid.clone())).unwrap();
    let widths: Vec<f64> = band.intervals.iter().map(Interval::width).collect();
    let r = pearson(&widths, &grid).unwrap().value_or_zero();
    assert!(r > 0.5, "{r}");
}

#[test]
fn localized_correction_recovers_a_deterministic_signal() {
    let g = |x: f64| (3.0 * x).sin() + x;
    let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let y: Vec<f64> = x.iter().map(|&v| g(v)).collect();
    let n = x.len();
    let mut xs = x.clone();
    xs.push(0.0);
    let mut ys = y.clone();
    ys.push(0.0);
    let data = Dataset::from_column(xs, ys).unwrap();
    let split = SplitIndices::new((0..n).collect(), vec![n]).unwrap();
    let loc = Localizer::new(KernelKind::Gaussian, Bandwidth::Fixed(1e-3));
    let model = LocalizedQuantileModel::fit(zero(), &loc, &data, &split, q(0.7), &mut seeded(0, 4)).unwrap();
    for query in [0.123, 0.5, 0.777, 0.991] {
        let got = model.corrected(&[query]).unwrap();
        let lo = (query * 100.0).floor() / 100.0;
        let hi = lo + 0.01;
        let tol = (g(lo) - g(query)).abs().max((g(hi) - g(query)).abs());
        assert!((got - g(query)).abs() <= tol + 1e-12, "{query}: {got}");
    }
}

#[test]
fn localized_correction_reduces_to_the_marginal_quantile() {
    let n = 5000;
    let mut rng = seeded(21, 1);
    let x: Vec<f64> = (0..=n).map(|_| rng.random_range(0.0..5.0)).collect();
    let y: Vec<f64> = (0..=n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let data = Dataset::from_column(x, y).unwrap();
    let split = SplitIndices::new((0..n).collect(), vec![n]).unwrap();
    let reported = 0.5;
    let base: SharedPredictor = Arc::new(Line(reported, 0.0));
    let loc = Localizer::new(KernelKind::Gaussian, Bandwidth::Fixed(1e6));
    let model = LocalizedQuantileModel::fit(base, &loc, &data, &split, q(0.9), &mut seeded(0, 4)).unwrap();
    let expected = 1.281_551_565_545 - reported;
    for query in [0.0, 2.5, 5.0] {
        let c = model.correction(&[query]).unwrap();
        assert!((c - expected).abs() <= 0.05, "{c} vs {expected}");
    }
}

fn split_conformal_upper(scores: &[f64], alpha: f64) -> f64 {
    conformal_quantile(scores, q(1.0 - alpha), false).unwrap()
}

#[test]
fn theta_quantile_on_the_calibration_cdf_is_split_conformal() {
    let mut rng = seeded(5, 1);
    for trial in 0..200 {
        let n = rng.random_range(10..60);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let alpha = [0.1, 0.2, 0.25][trial % 3];
        let cdf = WeightedEmpiricalCdf::uniform(&scores).unwrap();
        let cdfs = vec![cdf.clone(); n];
        let coverage = q(1.0 - alpha);
        if slcp::quantile::conformal_rank(n, coverage) > n {
            continue;
        }
        let theta = generalized_calibrate(&ThetaQuantile, &scores, &cdfs, coverage).unwrap();
        let band = generalized_band(&ThetaQuantile, theta, &cdf, ScoreInversion::Upper { center: 0.0 }).unwrap();
        assert_eq!(band.upper, split_conformal_upper(&scores, alpha), "trial {trial}");

        let theta = generalized_calibrate(&Vanilla, &scores, &cdfs, coverage).unwrap();
        let band = generalized_band(&Vanilla, theta, &cdf, ScoreInversion::Upper { center: 0.0 }).unwrap();
        assert_eq!(band.upper, split_conformal_upper(&scores, alpha));
    }
}

#[test]
fn uniform_weight_vanilla_reproduces_split_conformal_bands() {
    // With a score that ignores F, the generalized engine applied to |Y − μ̂|
    // is the two-sided split conformal band.
    let (data, split) = sim2(500, 8);
    let mean = RegressorKind::KnnMean(20)
        .fit(&data.select(&split.train), &TrainConfig::default())
        .unwrap();
    let scores: Vec<f64> = split
        .cal
        .iter()
        .map(|&i| (data.y(i) - mean.predict(data.x(i))).abs())
        .collect();
    let dummy = WeightedEmpiricalCdf::uniform(&scores).unwrap();
    let cdfs = vec![dummy.clone(); scores.len()];
    let theta = generalized_calibrate(&Vanilla, &scores, &cdfs, q(0.9)).unwrap();
    let split_cp = slcp::methods::SplitConformal::calibrate(mean.clone(), &data, &split, q(0.1)).unwrap();
    assert_eq!(theta, split_cp.d());
    for i in 0..20 {
        let x = [i as f64 / 4.0];
        let c = mean.predict(&x);
        let hi = generalized_band(&Vanilla, theta, &dummy, ScoreInversion::Upper { center: c }).unwrap();
        let lo = generalized_band(&Vanilla, theta, &dummy, ScoreInversion::Lower { center: c }).unwrap();
        assert_eq!(Interval::new(lo.lower, hi.upper), split_cp.interval(&x).unwrap());
    }
}

#[test]
fn generalized_band_examples() {
    let point = WeightedEmpiricalCdf::new([(0.7, 1.0)]).unwrap();
    let b = generalized_band(&AdditiveExpectation, 0.3, &point, ScoreInversion::Upper { center: 2.0 }).unwrap();
    assert!((b.upper - 3.0).abs() < 1e-15);
    let b = generalized_band(
        &AdditiveExpectation,
        f64::INFINITY,
        &point,
        ScoreInversion::Lower { center: 2.0 },
    )
    .unwrap();
    assert_eq!(b.lower, f64::NEG_INFINITY);
    let theta = generalized_calibrate(&ThetaQuantile, &[0.2], std::slice::from_ref(&point), q(0.9)).unwrap();
    assert_eq!(theta, f64::INFINITY);
}

#[test]
fn every_method_covers_marginally() {
    let registry = MethodRegistry::builtin();
    let configs: Vec<MethodConfig> = [
        r#"{"kind": "split", "alpha": 0.1}"#,
        r#"{"kind": "asym", "alpha": 0.1}"#,
        r#"{"kind": "cqr", "alpha": 0.1}"#,
        r#"{"kind": "slcp", "alpha": 0.1}"#,
        r#"{"kind": "slcp", "alpha": 0.1, "base": "quantile"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "multiplicative_quantile"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "additive_expectation"}"#,
        r#"{"kind": "generalized", "alpha": 0.1, "score": "theta_quantile"}"#,
    ]
    .iter()
    .map(|t| serde_json::from_str(t).unwrap())
    .collect();
    let reps = 50;
    let mut totals = vec![0.0; configs.len()];
    for seed in 0..reps {
        let data = SyntheticSpec::new(Family::Sim1, 2000).generate(1000 + seed).unwrap();
        let parts = split_three(2000, 0.6, 0.2, 1000 + seed).unwrap();
        let test = data.select(&parts.test);
        let models = FittingModelSource::new(ModelFamily::Knn { k: 30 }, &data, &parts.fit);
        let ctx = CalibrationContext {
            data: &data,
            split: &parts.fit,
            models: &models,
        };
        for (t, cfg) in totals.iter_mut().zip(&configs) {
            let band = registry
                .build(cfg)
                .unwrap()
                .calibrate(&ctx, &mut seeded(seed, 4))
                .unwrap()
                .predict(&test.features)
                .unwrap();
            *t += coverage_rate(&band.intervals, &test.response).unwrap();
        }
    }
    let floor = 0.9 - 3.0 * (0.09f64 / (reps as f64 * 400.0)).sqrt();
    for (t, cfg) in totals.iter().zip(&configs) {
        let mean = t / reps as f64;
        assert!(mean >= floor, "{} {:?}: {mean}", cfg.kind, cfg.score);
    }
}
