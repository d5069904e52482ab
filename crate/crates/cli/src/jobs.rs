//! Label and harness jobs, and the files they write.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pmlp_core::synthlab::{
    compare_pmlp_vs_lpa, density_ratio_sweep, gen_gaussian_blobs, verify_theorem1, ComparisonReport, DensityRatioPoint,
    GeneratorSpec, TheoremOneReport, TheoremOneSetup,
};
use pmlp_core::{run_pmlp_with_classes, FeatureMatrix, PmlpConfig, PropagationResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ingest_features, Format, LabeledData};
use crate::error::{CliError, Result};
use crate::settings::{CompareSetup, DensityRatioSetup, Settings};

pub const LABELS_FILE: &str = "labels.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plot.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// What is needed to reproduce a job's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: String,
    pub config: PmlpConfig,
    /// Harness parameters, for harness jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness: Option<serde_json::Value>,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(job: &str, config: &PmlpConfig, harness: Option<serde_json::Value>, inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job: job.into(),
            config: config.clone(),
            harness,
            inputs,
            seed: config.seed,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Equal in everything but the timestamp.
    pub fn same_run(&self, other: &Self) -> bool {
        Self {
            timestamp_unix: 0,
            ..self.clone()
        } == Self {
            timestamp_unix: 0,
            ..other.clone()
        }
    }
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// A CSV writer over an in-memory buffer; written to disk in one go.
struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    fn new() -> Self {
        Self {
            w: csv::Writer::from_writer(Vec::new()),
        }
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w
            .write_record(fields)
            .map_err(|e| CliError::Data(format!("csv write failed: {e}")))
    }

    fn save(self, path: &Path) -> Result<()> {
        let bytes = self
            .w
            .into_inner()
            .map_err(|e| CliError::Data(format!("csv write failed: {e}")))?;
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LabelJob {
    pub input: PathBuf,
    pub format: Option<Format>,
    pub out_dir: PathBuf,
    /// Class count; inferred from the labels when absent.
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub n_rows: usize,
    pub n_labeled: usize,
    pub num_classes: usize,
    pub high_conf_ratio: f64,
    /// Argmax accuracy on unlabeled rows with a known true class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub solver_iterations: usize,
    pub residual: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub code: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FailedMetrics {
    error: ErrorReport,
}

/// Rows whose renormalized max score reaches τ.
pub fn high_confidence_rows(result: &PropagationResult, tau: f64) -> Vec<bool> {
    let normalized = result.final_labels.row_normalized();
    (0..normalized.rows()).map(|t| normalized.row_max(t) >= tau).collect()
}

pub fn label_metrics(data: &LabeledData, result: &PropagationResult, cfg: &PmlpConfig) -> LabelMetrics {
    let high = high_confidence_rows(result, cfg.tau);
    let n = data.labels.len();
    let argmax = result.argmax();
    let accuracy = data.true_labels.as_ref().and_then(|truth| {
        let scored: Vec<bool> = (0..n)
            .filter(|&t| !data.labels[t].is_ground_truth())
            .filter_map(|t| truth[t].map(|c| argmax[t] == Some(c)))
            .collect();
        (!scored.is_empty()).then(|| scored.iter().filter(|&&ok| ok).count() as f64 / scored.len() as f64)
    });
    LabelMetrics {
        n_rows: n,
        n_labeled: data.labels.iter().filter(|l| l.is_ground_truth()).count(),
        num_classes: result.num_classes,
        high_conf_ratio: high.iter().filter(|&&h| h).count() as f64 / n as f64,
        accuracy,
        solver_iterations: result.iterations_used,
        residual: result.residual,
        converged: result.converged,
    }
}

/// row_index, argmax_class (-1 for an all-zero row), score_0.., high_confidence.
pub fn write_labels_csv(path: &Path, result: &PropagationResult, cfg: &PmlpConfig) -> Result<()> {
    let high = high_confidence_rows(result, cfg.tau);
    let c = result.num_classes;
    let mut out = CsvOut::new();
    let mut header = vec!["row_index".to_string(), "argmax_class".to_string()];
    header.extend((0..c).map(|k| format!("score_{k}")));
    header.push("high_confidence".into());
    out.row(&header)?;
    for (t, am) in result.argmax().into_iter().enumerate() {
        let mut rec = vec![t.to_string(), am.map_or("-1".into(), |a| a.to_string())];
        rec.extend(result.final_labels.row(t).iter().map(|&v| num(v)));
        rec.push(if high[t] { "1" } else { "0" }.into());
        out.row(&rec)?;
    }
    out.save(path)
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub metrics: LabelMetrics,
    pub manifest: RunManifest,
}

fn label_inner(job: &LabelJob, settings: &Settings) -> Result<LabelOutcome> {
    let cfg = settings.pmlp();
    let mut inputs = vec![digest_file(&job.input)?];
    if let Some(p) = &settings.config_path {
        inputs.push(digest_file(p)?);
    }
    let manifest = RunManifest::new("label", cfg, None, inputs);
    write_json(&job.out_dir.join(MANIFEST_FILE), &manifest)?;

    let format = match job.format {
        Some(f) => f,
        None => Format::from_path(&job.input)?,
    };
    let data = ingest_features(&job.input, format)?;
    let result = run_pmlp_with_classes(&data.features, &data.labels, job.num_classes, cfg)?;
    write_labels_csv(&job.out_dir.join(LABELS_FILE), &result, cfg)?;
    let metrics = label_metrics(&data, &result, cfg);
    write_json(&job.out_dir.join(METRICS_FILE), &metrics)?;
    Ok(LabelOutcome { metrics, manifest })
}

/// Runs propagation on an input file and writes labels, metrics and a
/// manifest into `job.out_dir`. On failure the metrics file carries the
/// error code instead.
pub fn run_label_job(job: &LabelJob, settings: &Settings) -> Result<LabelOutcome> {
    ensure_dir(&job.out_dir)?;
    let out = label_inner(job, settings);
    if let Err(e) = &out {
        let report = FailedMetrics {
            error: ErrorReport {
                code: e.code().into(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            },
        };
        let _ = fs::remove_file(job.out_dir.join(LABELS_FILE));
        write_json(&job.out_dir.join(METRICS_FILE), &report)?;
    }
    out
}

// ---------------------------------------------------------------------------
// harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnessKind {
    Theorem1,
    CompareModes,
    DensityRatioSweep,
}

impl HarnessKind {
    pub fn name(&self) -> &'static str {
        match self {
            HarnessKind::Theorem1 => "theorem1",
            HarnessKind::CompareModes => "compare",
            HarnessKind::DensityRatioSweep => "density-ratio",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremOneOutput {
    pub setup: TheoremOneSetup,
    pub bandwidth_h: f64,
    pub seed: u64,
    pub rows: Vec<TheoremOneReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareOutput {
    pub setup: CompareSetup,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityRatioOutput {
    pub setup: DensityRatioSetup,
    /// Digest of the feature file when the sweep ran on user data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputDigest>,
    pub rows: Vec<DensityRatioPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarnessOutput {
    Theorem1(TheoremOneOutput),
    Compare(CompareOutput),
    DensityRatio(DensityRatioOutput),
}

pub fn run_theorem1(setup: &TheoremOneSetup, cfg: &PmlpConfig) -> Result<TheoremOneOutput> {
    Ok(TheoremOneOutput {
        setup: setup.clone(),
        bandwidth_h: cfg.bandwidth_h,
        seed: cfg.seed,
        rows: verify_theorem1(setup, cfg)?,
    })
}

pub fn run_compare(setup: &CompareSetup, cfg: &PmlpConfig) -> Result<CompareOutput> {
    let spec = GeneratorSpec {
        kind: setup.dataset.clone(),
        seed: setup.data_seed,
    };
    Ok(CompareOutput {
        setup: setup.clone(),
        report: compare_pmlp_vs_lpa(&spec, cfg, setup.trials)?,
    })
}

/// Sweeps R_h on the feature file if one is given, otherwise on the blob
/// dataset described by `setup`.
pub fn run_density_ratio(
    setup: &DensityRatioSetup,
    cfg: &PmlpConfig,
    input: Option<(&Path, Format)>,
) -> Result<DensityRatioOutput> {
    let (features, digest): (FeatureMatrix, Option<InputDigest>) = match input {
        Some((path, format)) => (ingest_features(path, format)?.features, Some(digest_file(path)?)),
        None => (
            gen_gaussian_blobs(&setup.means, setup.sigma, setup.per_class, 0, setup.data_seed)?.features,
            None,
        ),
    };
    Ok(DensityRatioOutput {
        setup: setup.clone(),
        input: digest,
        rows: density_ratio_sweep(&features, &setup.bandwidths, setup.pairs, cfg)?,
    })
}

pub fn plot_rows(output: &HarnessOutput) -> (Vec<&'static str>, Vec<Vec<String>>) {
    match output {
        HarnessOutput::Theorem1(o) => (
            vec![
                "separation",
                "tau_density",
                "fraction_event_c",
                "fraction_low_density_length",
            ],
            o.rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.separation),
                        num(r.tau_density),
                        num(r.fraction_event_c),
                        num(r.fraction_low_density_length),
                    ]
                })
                .collect(),
        ),
        HarnessOutput::Compare(o) => (
            vec!["trial", "seed", "mode", "accuracy", "high_ratio", "correct_high_ratio"],
            o.report
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.trial.to_string(),
                        r.seed.to_string(),
                        r.mode.to_string(),
                        num(r.accuracy),
                        num(r.high_ratio),
                        num(r.correct_high_ratio),
                    ]
                })
                .collect(),
        ),
        HarnessOutput::DensityRatio(o) => (
            vec!["bandwidth_h", "ratio"],
            o.rows.iter().map(|p| vec![num(p.bandwidth_h), num(p.ratio)]).collect(),
        ),
    }
}

#[derive(Debug, Clone)]
pub struct HarnessJob {
    pub kind: HarnessKind,
    pub out_dir: PathBuf,
    /// Feature file for the density-ratio sweep.
    pub input: Option<(PathBuf, Format)>,
}

/// Runs one harness and writes `report.json`, `plot.csv` and a manifest.
pub fn run_harness_job(job: &HarnessJob, settings: &Settings) -> Result<HarnessOutput> {
    ensure_dir(&job.out_dir)?;
    let cfg = settings.pmlp();
    let file = &settings.file;
    let (output, harness) = match job.kind {
        HarnessKind::Theorem1 => (
            HarnessOutput::Theorem1(run_theorem1(&file.theorem1, cfg)?),
            serde_json::to_value(&file.theorem1),
        ),
        HarnessKind::CompareModes => (
            HarnessOutput::Compare(run_compare(&file.compare, cfg)?),
            serde_json::to_value(&file.compare),
        ),
        HarnessKind::DensityRatioSweep => {
            let input = job.input.as_ref().map(|(p, f)| (p.as_path(), *f));
            (
                HarnessOutput::DensityRatio(run_density_ratio(&file.density_ratio, cfg, input)?),
                serde_json::to_value(&file.density_ratio),
            )
        }
    };
    let harness = harness.map_err(|e| CliError::Data(e.to_string()))?;

    let mut inputs = Vec::new();
    if let Some((p, _)) = &job.input {
        inputs.push(digest_file(p)?);
    }
    if let Some(p) = &settings.config_path {
        inputs.push(digest_file(p)?);
    }
    let manifest = RunManifest::new(job.kind.name(), cfg, Some(harness), inputs);

    write_json(&job.out_dir.join(REPORT_FILE), &output)?;
    let (header, rows) = plot_rows(&output);
    let mut plot = CsvOut::new();
    plot.row(&header)?;
    for r in &rows {
        plot.row(r)?;
    }
    plot.save(&job.out_dir.join(PLOT_FILE))?;
    write_json(&job.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(output)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// A generated dataset in ingestible form, with its true classes attached.
pub fn generated_data(spec: &GeneratorSpec) -> Result<LabeledData> {
    let ds = spec.generate()?;
    Ok(LabeledData {
        labels: ds.assignments(),
        true_labels: Some(ds.true_class.iter().map(|&c| Some(c)).collect()),
        features: ds.features,
    })
}
