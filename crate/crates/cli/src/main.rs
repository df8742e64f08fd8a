use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use slcp::evaluation::{Family, MetricsReport, SyntheticSpec};
use slcp::experiment::{run, ExperimentConfig};
use slcp::io::{load_csv, read_bands, write_dataset};

#[derive(Parser)]
#[command(name = "slcp", version, about = "Split localized conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for replications (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate a synthetic dataset as CSV.
    Gen {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        x_min: f64,
        #[arg(long, default_value_t = 5.0)]
        x_max: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
    },
    /// Score a band trace against a dataset.
    Eval {
        #[arg(long)]
        bands: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, jobs } => {
            let cfg = ExperimentConfig::from_path(&config).with_context(|| format!("reading {}", config.display()))?;
            let out = run(&cfg, jobs)?;
            eprintln!("wrote {} result rows to {}", out.rows.len(), cfg.output.display());
        }
        Command::Gen {
            family,
            n,
            seed,
            out,
            x_min,
            x_max,
            noise_scale,
        } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let spec = SyntheticSpec::new(Family::parse(&family)?, n)
                .with_range(x_min, x_max)
                .with_noise_scale(noise_scale);
            let data = spec.generate(seed)?;
            match out {
                Some(path) => {
                    let mut w =
                        BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                    write_dataset(&data, &mut w)?;
                    w.flush()?;
                }
                None => {
                    let mut w = BufWriter::new(io::stdout().lock());
                    write_dataset(&data, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Eval { bands, data } => {
            let file = File::open(&bands).with_context(|| format!("opening {}", bands.display()))?;
            let intervals = read_bands(file).with_context(|| format!("reading {}", bands.display()))?;
            let dataset = load_csv(&data).with_context(|| format!("reading {}", data.display()))?;
            if intervals.len() != dataset.len() {
                bail!("{} bands but {} data rows", intervals.len(), dataset.len());
            }
            let report = MetricsReport::compute(&intervals, &dataset.response, None, None)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
