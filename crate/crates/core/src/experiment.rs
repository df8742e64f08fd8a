//! Config-driven experiment runner.
//!
//! One replication draws (or loads) data, splits it, fits the base models on
//! the training rows and then calibrates and evaluates every configured
//! method. Replications run in parallel; rows come back ordered by
//! `(method, seed)` whatever the completion order.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{Correlation, MetricsReport, SyntheticSpec};
use crate::io::{format_f64, load_csv};
use crate::methods::{
    split_three, CalibrationContext, Corrections, Diagnostics, FittingModelSource, Interval, MethodConfig,
    MethodRegistry, ModelFamily,
};
use crate::rng::{seeded, streams};

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    /// CSV file with a header row; the last column is the response.
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Replication `r` uses seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
}

fn default_train_fraction() -> f64 {
    0.6
}

fn default_test_fraction() -> f64 {
    0.2
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
            test_fraction: default_test_fraction(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExperimentConfig")]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub model: ModelFamily,
    pub methods: Vec<MethodConfig>,
    pub replications: usize,
    pub output: PathBuf,
    /// Divide average lengths by the mean absolute response of the data.
    pub normalize_length: bool,
    /// Fill the `runtime_ms` column; off by default so results are
    /// byte-reproducible.
    pub record_runtime: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperimentConfig {
    dataset: DatasetSource,
    #[serde(default)]
    split: SplitConfig,
    #[serde(default)]
    model: ModelFamily,
    methods: Vec<MethodConfig>,
    #[serde(default = "one")]
    replications: usize,
    output: PathBuf,
    #[serde(default)]
    normalize_length: bool,
    #[serde(default)]
    record_runtime: bool,
}

fn one() -> usize {
    1
}

impl TryFrom<RawExperimentConfig> for ExperimentConfig {
    type Error = String;

    fn try_from(raw: RawExperimentConfig) -> std::result::Result<Self, String> {
        if raw.methods.is_empty() {
            return Err("`methods` must list at least one method".into());
        }
        let mut seen = BTreeSet::new();
        for m in &raw.methods {
            if !seen.insert(m.name.as_str()) {
                return Err(format!("duplicate method name `{}`; set distinct `name`s", m.name));
            }
            if m.name.is_empty() || m.name.contains(['/', '\\', ',']) {
                return Err(format!("method name `{}` cannot be used in file names", m.name));
            }
        }
        if raw.replications == 0 {
            return Err("`replications` must be at least 1".into());
        }
        let SplitConfig {
            train_fraction: tr,
            test_fraction: te,
            ..
        } = raw.split;
        if !(tr > 0.0 && te > 0.0 && tr + te < 1.0) {
            return Err(format!(
                "split fractions must be positive with train_fraction + test_fraction < 1, got {tr} and {te}"
            ));
        }
        if let DatasetSource::Synthetic(spec) = &raw.dataset {
            spec.validate().map_err(|e| e.to_string())?;
        }
        if let ModelFamily::Linear { train } = &raw.model {
            train.validate().map_err(|e| e.to_string())?;
        }
        let registry = MethodRegistry::builtin();
        for m in &raw.methods {
            registry.build(m).map_err(|e| format!("method `{}`: {e}", m.name))?;
        }
        Ok(Self {
            dataset: raw.dataset,
            split: raw.split,
            model: raw.model,
            methods: raw.methods,
            replications: raw.replications,
            output: raw.output,
            normalize_length: raw.normalize_length,
            record_runtime: raw.record_runtime,
        })
    }
}

impl ExperimentConfig {
    /// Parses a JSON document; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.replications as u64).map(|r| self.split.seed.wrapping_add(r))
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub avg_length: f64,
    pub pearson: Correlation,
    pub runtime_ms: Option<f64>,
    pub flags: Vec<String>,
}

/// Test-set band of one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTrace {
    pub method: String,
    pub seed: u64,
    pub test: Dataset,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodManifest {
    pub method: String,
    pub kind: String,
    pub corrections: Corrections,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationManifest {
    pub seed: u64,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub methods: Vec<MethodManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<BandTrace>,
    pub replications: Vec<ReplicationManifest>,
}

struct Replication {
    rows: Vec<ResultRow>,
    traces: Vec<BandTrace>,
    manifest: ReplicationManifest,
}

/// Runs every replication on up to `jobs` threads (`None` = all cores).
pub fn run_in_memory(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunOutput> {
    let csv_data = match &config.dataset {
        DatasetSource::Csv(path) => Some(load_csv(path)?),
        DatasetSource::Synthetic(_) => None,
    };
    let seeds: Vec<u64> = config.seeds().collect();
    let work = || -> Result<Vec<Replication>> {
        seeds
            .par_iter()
            .map(|&seed| run_replication(config, csv_data.as_ref(), seed))
            .collect()
    };
    let reps = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let n_methods = config.methods.len();
    let mut rows = Vec::with_capacity(n_methods * reps.len());
    let mut traces = Vec::with_capacity(n_methods * reps.len());
    for m in 0..n_methods {
        for rep in &reps {
            rows.push(rep.rows[m].clone());
            traces.push(rep.traces[m].clone());
        }
    }
    Ok(RunOutput {
        rows,
        traces,
        replications: reps.into_iter().map(|r| r.manifest).collect(),
    })
}

fn run_replication(config: &ExperimentConfig, csv_data: Option<&Dataset>, seed: u64) -> Result<Replication> {
    let data = match (&config.dataset, csv_data) {
        (_, Some(d)) => d.clone(),
        (DatasetSource::Synthetic(spec), None) => spec.generate(seed)?,
        (DatasetSource::Csv(_), None) => unreachable!("csv data is loaded up front"),
    };
    data.ensure_finite()?;
    let parts = split_three(
        data.len(),
        config.split.train_fraction,
        config.split.test_fraction,
        seed,
    )?;
    let test = match &config.dataset {
        DatasetSource::Synthetic(spec) if spec.shift.is_some() => spec.generate_test(parts.test.len(), seed)?,
        _ => data.select(&parts.test),
    };
    let models = FittingModelSource::new(config.model, &data, &parts.fit);
    let ctx = CalibrationContext {
        data: &data,
        split: &parts.fit,
        models: &models,
    };
    let normalizer = config.normalize_length.then(|| data.mean_abs_response());
    let registry = MethodRegistry::builtin();
    let (n_train, n_cal, n_test) = (parts.fit.train.len(), parts.fit.cal.len(), test.len());

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut manifests = Vec::new();
    for (idx, mc) in config.methods.iter().enumerate() {
        let method = registry.build(mc)?;
        let mut rng = seeded(seed, streams::BATCH + 16 * idx as u64);
        let start = Instant::now();
        let calibrated = method.calibrate(&ctx, &mut rng)?;
        let band = calibrated.predict(&test.features)?;
        let report = MetricsReport::compute(&band.intervals, &test.response, normalizer, None)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;

        let mut flags = Vec::new();
        if !report.pearson.is_defined() {
            flags.push("pearson_undefined".to_string());
        }
        if report.infinite_bands > 0 {
            flags.push(format!("infinite_bands={}", report.infinite_bands));
        }
        if band.uniform_fallbacks > 0 {
            flags.push(format!("uniform_fallback={}", band.uniform_fallbacks));
        }
        if band.crossed > 0 {
            flags.push(format!("crossed={}", band.crossed));
        }
        rows.push(ResultRow {
            method: mc.name.clone(),
            seed,
            n_train,
            n_cal,
            n_test,
            alpha: mc.alpha,
            coverage: report.coverage,
            avg_length: report.avg_length,
            pearson: report.pearson,
            runtime_ms: config.record_runtime.then_some(elapsed),
            flags,
        });
        manifests.push(MethodManifest {
            method: mc.name.clone(),
            kind: mc.kind.clone(),
            corrections: band.corrections,
            diagnostics: calibrated.diagnostics(),
        });
        traces.push(BandTrace {
            method: mc.name.clone(),
            seed,
            test: test.clone(),
            intervals: band.intervals,
        });
    }
    Ok(Replication {
        rows,
        traces,
        manifest: ReplicationManifest {
            seed,
            n_train,
            n_cal,
            n_test,
            methods: manifests,
        },
    })
}

pub const RESULTS_HEADER: &str = "method,seed,n_train,n_cal,n_test,alpha,coverage,avg_length,pearson,runtime_ms,flags";

pub fn write_results(rows: &[ResultRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        let runtime = r.runtime_ms.map(format_f64).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.seed,
            r.n_train,
            r.n_cal,
            r.n_test,
            format_f64(r.alpha),
            format_f64(r.coverage),
            format_f64(r.avg_length),
            format_f64(r.pearson.value_or_zero()),
            runtime,
            r.flags.join(";"),
        )?;
    }
    Ok(())
}

/// Columns `x` (or `x_0,…`), `lower`, `upper`, `y_true`, one row per test
/// point in test-set order.
pub fn write_trace(trace: &BandTrace, mut out: impl Write) -> Result<()> {
    let d = trace.test.dim();
    let mut header: Vec<String> = if d == 1 {
        vec!["x".into()]
    } else {
        (0..d).map(|j| format!("x_{j}")).collect()
    };
    header.extend(["lower", "upper", "y_true"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..trace.test.len() {
        let mut cells: Vec<String> = trace.test.x(i).iter().map(|&v| format_f64(v)).collect();
        let band = trace.intervals[i];
        cells.extend([band.lower, band.upper, trace.test.y(i)].map(format_f64));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn trace_file_name(method: &str, seed: u64) -> String {
    format!("bands_{method}_{seed}.csv")
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    replications: &'a [ReplicationManifest],
}

/// Writes `results.csv`, one band trace per row and `manifest.json` under
/// the configured output directory.
pub fn write_outputs(config: &ExperimentConfig, output: &RunOutput) -> Result<()> {
    let dir = &config.output;
    fs::create_dir_all(dir)?;
    let mut results = BufWriter::new(fs::File::create(dir.join("results.csv"))?);
    write_results(&output.rows, &mut results)?;
    results.flush()?;
    for trace in &output.traces {
        let mut f = BufWriter::new(fs::File::create(dir.join(trace_file_name(&trace.method, trace.seed)))?);
        write_trace(trace, &mut f)?;
        f.flush()?;
    }
    let manifest = Manifest {
        config,
        replications: &output.replications,
    };
    let mut f = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Runs the experiment and writes all of its files.
pub fn run(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunOutput> {
    let output = run_in_memory(config, jobs)?;
    write_outputs(config, &output)?;
    Ok(output)
}
