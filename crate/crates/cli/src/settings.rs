//! Configuration layering: defaults, then a TOML or JSON file, then the
//! `PMLP_SEED` environment variable, then command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use pmlp_core::synthlab::{GeneratorKind, TheoremOneSetup};
use pmlp_core::{validate_config, Aggregator, ClosedFormScaling, DistanceMode, Mode, PmlpConfig, Solver};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "PMLP_SEED";

/// Parameters of the mode comparison: which dataset family, its base seed,
/// and how many trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSetup {
    pub dataset: GeneratorKind,
    pub data_seed: u64,
    pub trials: usize,
}

impl Default for CompareSetup {
    fn default() -> Self {
        Self {
            dataset: GeneratorKind::TwoMoons {
                n: 300,
                noise: 0.1,
                labeled_per_class: 2,
            },
            data_seed: 0,
            trials: 20,
        }
    }
}

/// Blob dataset and bandwidth grid for the density-ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityRatioSetup {
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub per_class: usize,
    pub data_seed: u64,
    pub bandwidths: Vec<f64>,
    pub pairs: usize,
}

impl Default for DensityRatioSetup {
    fn default() -> Self {
        Self {
            means: vec![vec![0.0, 0.0], vec![6.0, 0.0]],
            sigma: 1.0,
            per_class: 100,
            data_seed: 3,
            bandwidths: vec![5.0, 100.0, 1e12],
            pairs: 200,
        }
    }
}

/// Everything a config file may hold. Propagation settings sit at the top
/// level; harness settings live in their own tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub pmlp: PmlpConfig,
    pub theorem1: TheoremOneSetup,
    pub compare: CompareSetup,
    pub density_ratio: DensityRatioSetup,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let bad = |m: String| CliError::Usage(format!("config {}: {m}", path.display()));
    if is_json {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

fn parse_solver(s: &str) -> std::result::Result<String, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "closed-form" | "direct" => Ok("closed-form".into()),
        "iterative" => Ok("iterative".into()),
        _ => Err(format!("unknown solver `{s}`")),
    }
}

fn parse_scaling(s: &str) -> std::result::Result<ClosedFormScaling, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "paper-closed-form" | "raw" => Ok(ClosedFormScaling::PaperClosedForm),
        "iterative-fixed-point" | "fixed-point" => Ok(ClosedFormScaling::IterativeFixedPoint),
        _ => Err(format!("unknown closed-form scaling `{s}`")),
    }
}

/// Flags mirroring the configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// TOML or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub bandwidth_h: Option<f64>,
    #[arg(long)]
    pub path_points_k: Option<usize>,
    #[arg(long)]
    pub kde_support_n: Option<usize>,
    #[arg(long)]
    pub neighbor_count: Option<usize>,
    /// min, max, avg, median or quantile:<t>.
    #[arg(long, value_parser = Aggregator::from_str)]
    pub aggregator: Option<Aggregator>,
    /// euclidean-inverse, cosine-similarity or first-order-similarity.
    #[arg(long, value_parser = DistanceMode::from_str)]
    pub distance_mode: Option<DistanceMode>,
    /// closed-form or iterative.
    #[arg(long, value_parser = parse_solver)]
    pub solver: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// pmlp or classical-lpa.
    #[arg(long, value_parser = Mode::from_str)]
    pub mode: Option<Mode>,
    /// iterative-fixed-point or paper-closed-form.
    #[arg(long, value_parser = parse_scaling)]
    pub closed_form_scaling: Option<ClosedFormScaling>,
    #[arg(long)]
    pub clamp_ground_truth: Option<bool>,
    #[arg(long)]
    pub renormalize_output: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn apply_solver(cfg: &mut PmlpConfig, flags: &ConfigFlags) {
    let (cur_iters, cur_tol) = match cfg.solver {
        Solver::Iterative { max_iters, tol } => (max_iters, tol),
        Solver::ClosedForm => match PmlpConfig::default().solver {
            Solver::Iterative { max_iters, tol } => (max_iters, tol),
            Solver::ClosedForm => unreachable!("default solver is iterative"),
        },
    };
    let iterative = match flags.solver.as_deref() {
        Some("closed-form") => false,
        Some(_) => true,
        None => matches!(cfg.solver, Solver::Iterative { .. }),
    };
    cfg.solver = if iterative {
        Solver::Iterative {
            max_iters: flags.max_iters.unwrap_or(cur_iters),
            tol: flags.tol.unwrap_or(cur_tol),
        }
    } else {
        Solver::ClosedForm
    };
}

impl ConfigFlags {
    /// Overlays the flags on `cfg`.
    pub fn apply(&self, cfg: &mut PmlpConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { cfg.$f = v; } )* };
        }
        set!(
            alpha,
            eta,
            tau,
            bandwidth_h,
            path_points_k,
            kde_support_n,
            aggregator,
            distance_mode,
            mode,
            closed_form_scaling,
            clamp_ground_truth,
            renormalize_output,
            seed
        );
        if let Some(k) = self.neighbor_count {
            cfg.neighbor_count = Some(k);
        }
        apply_solver(cfg, self);
    }
}

/// The resolved configuration plus whatever the file said about harnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub file: ConfigFile,
    pub config_path: Option<PathBuf>,
}

impl Settings {
    pub fn pmlp(&self) -> &PmlpConfig {
        &self.file.pmlp
    }
}

/// Layers file, environment seed and flags, then validates. `env_seed` is
/// the raw value of `PMLP_SEED`, if set.
pub fn resolve(flags: &ConfigFlags, env_seed: Option<&str>) -> Result<Settings> {
    let mut file = match &flags.config {
        Some(p) => load_config_file(p)?,
        None => ConfigFile::default(),
    };
    if let Some(raw) = env_seed {
        file.pmlp.seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
    }
    flags.apply(&mut file.pmlp);
    file.pmlp = validate_config(file.pmlp)?;
    Ok(Settings {
        file,
        config_path: flags.config.clone(),
    })
}

pub fn resolve_from_env(flags: &ConfigFlags) -> Result<Settings> {
    let env = std::env::var(SEED_ENV).ok();
    resolve(flags, env.as_deref())
}
