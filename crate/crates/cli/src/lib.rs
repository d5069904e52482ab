//! Command-line driver: ingest data, run propagation and the statistical
//! harnesses, write labels, metrics, plot data and run manifests.

pub mod dataset;
pub mod error;
pub mod jobs;
pub mod settings;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use pmlp_core::synthlab::{GeneratorKind, GeneratorSpec};

use crate::dataset::{write_dataset, Format};
use crate::error::{CliError, Result};
use crate::jobs::{generated_data, run_harness_job, run_label_job, HarnessJob, HarnessKind, LabelJob};
use crate::settings::{resolve_from_env, ConfigFlags, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "pmlp", version, about = "Density-aware label propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate labels over a CSV or JSONL feature file.
    Label {
        input: PathBuf,
        /// csv or jsonl; inferred from the extension by default.
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Class count when it cannot be inferred from the labels.
        #[arg(long)]
        num_classes: Option<usize>,
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Run a statistical harness and write report.json and plot.csv.
    Harness {
        #[command(subcommand)]
        kind: HarnessCommand,
    },
    /// Write a synthetic dataset.
    Generate {
        #[command(subcommand)]
        kind: GenerateCommand,
    },
}

#[derive(Debug, clap::Args)]
pub struct HarnessCommon {
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Subcommand)]
pub enum HarnessCommand {
    /// Low-density crossings between two separated clusters.
    Theorem1 {
        /// Comma-separated cluster separations, overriding the config file.
        #[arg(long, value_delimiter = ',')]
        separations: Option<Vec<f64>>,
        #[command(flatten)]
        common: HarnessCommon,
    },
    /// PMLP against classical propagation over seeded trials.
    Compare {
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: HarnessCommon,
    },
    /// Density ratio across bandwidths.
    DensityRatio {
        /// Comma-separated bandwidths, overriding the config file.
        #[arg(long, value_delimiter = ',')]
        bandwidths: Option<Vec<f64>>,
        /// Feature file to sweep instead of the configured blobs.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        #[command(flatten)]
        common: HarnessCommon,
    },
}

#[derive(Debug, clap::Args)]
pub struct GenerateCommon {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 2)]
    pub labeled_per_class: usize,
    /// Falls back to PMLP_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Isotropic Gaussian blobs.
    Blobs {
        /// Class means, `;`-separated, coordinates `,`-separated: "0,0;10,0".
        #[arg(long, default_value = "0,0;10,0")]
        means: String,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[command(flatten)]
        common: GenerateCommon,
    },
    /// Two interleaving half-circles.
    Moons {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[command(flatten)]
        common: GenerateCommon,
    },
}

pub fn parse_means(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|m| {
            m.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("bad coordinate `{v}` in --means")))
                })
                .collect()
        })
        .collect()
}

fn generate_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{raw}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn output_format(common: &GenerateCommon) -> Result<Format> {
    match common.format {
        Some(f) => Ok(f),
        None => Format::from_path(&common.output),
    }
}

fn harness(
    kind: HarnessKind,
    common: &HarnessCommon,
    input: Option<(PathBuf, Format)>,
    tweak: impl FnOnce(&mut settings::ConfigFile),
) -> Result<String> {
    let mut settings = resolve_from_env(&common.config)?;
    tweak(&mut settings.file);
    let job = HarnessJob {
        kind,
        out_dir: common.out_dir.clone(),
        input,
    };
    run_harness_job(&job, &settings)?;
    Ok(format!(
        "{} report written to {}",
        kind.name(),
        common.out_dir.display()
    ))
}

/// Executes a parsed command and returns a one-line summary.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Label {
            input,
            format,
            out_dir,
            num_classes,
            config,
        } => {
            let settings = resolve_from_env(&config)?;
            let job = LabelJob {
                input,
                format,
                out_dir,
                num_classes,
            };
            let out = run_label_job(&job, &settings)?;
            let m = &out.metrics;
            let acc = m.accuracy.map_or(String::new(), |a| format!(", accuracy {a}"));
            Ok(format!(
                "labeled {} rows ({} classes), high-confidence ratio {}{acc}",
                m.n_rows, m.num_classes, m.high_conf_ratio
            ))
        }
        Command::Harness { kind } => match kind {
            HarnessCommand::Theorem1 { separations, common } => harness(HarnessKind::Theorem1, &common, None, |f| {
                if let Some(s) = separations {
                    f.theorem1.separations = s;
                }
            }),
            HarnessCommand::Compare { trials, common } => harness(HarnessKind::CompareModes, &common, None, |f| {
                if let Some(t) = trials {
                    f.compare.trials = t;
                }
            }),
            HarnessCommand::DensityRatio {
                bandwidths,
                input,
                format,
                common,
            } => {
                let input = match input {
                    Some(p) => {
                        let f = match format {
                            Some(f) => f,
                            None => Format::from_path(&p)?,
                        };
                        Some((p, f))
                    }
                    None => None,
                };
                harness(HarnessKind::DensityRatioSweep, &common, input, |f| {
                    if let Some(b) = bandwidths {
                        f.density_ratio.bandwidths = b;
                    }
                })
            }
        },
        Command::Generate { kind } => {
            let (gen_kind, common) = match kind {
                GenerateCommand::Blobs {
                    means,
                    sigma,
                    per_class,
                    common,
                } => (
                    GeneratorKind::GaussianBlobs {
                        means: parse_means(&means)?,
                        sigma,
                        per_class,
                        labeled_per_class: common.labeled_per_class,
                    },
                    common,
                ),
                GenerateCommand::Moons { n, noise, common } => (
                    GeneratorKind::TwoMoons {
                        n,
                        noise,
                        labeled_per_class: common.labeled_per_class,
                    },
                    common,
                ),
            };
            let format = output_format(&common)?;
            let spec = GeneratorSpec {
                kind: gen_kind,
                seed: generate_seed(common.seed)?,
            };
            let data = generated_data(&spec)?;
            write_dataset(&data, &common.output, format)?;
            Ok(format!(
                "wrote {} rows to {}",
                data.labels.len(),
                common.output.display()
            ))
        }
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}
