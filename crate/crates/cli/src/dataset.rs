//! CSV and JSONL ingestion and emission.
//!
//! CSV: feature columns, then `label`. A header row is optional; when present
//! it may name a `label` column and a `true_label` column anywhere, and every
//! other column is a feature. Without a header the last column is the label.
//! Labels are a class index, `-1` (or empty) for unlabeled, or a probability
//! list such as `"[0.7,0.3]"`.
//!
//! JSONL: one object per line, `{"features": [...], "label": c | null | [...]}`
//! with an optional `"true_label": c`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use pmlp_core::{FeatureMatrix, LabelAssignment, MAX_ROWS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Probability labels must sum to 1 within this.
pub const PROBABILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => Ok(Format::Csv),
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            _ => Err(CliError::Usage(format!(
                "cannot infer format of {}; pass --format csv|jsonl",
                path.display()
            ))),
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

/// Features with their label assignments and, when the file carries it, the
/// true class of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: FeatureMatrix,
    pub labels: Vec<LabelAssignment>,
    pub true_labels: Option<Vec<Option<usize>>>,
}

pub fn ingest_features(path: &Path, format: Format) -> Result<LabeledData> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let name = path.display().to_string();
    match format {
        Format::Csv => read_csv(file, &name),
        Format::Jsonl => read_jsonl(BufReader::new(file), &name),
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn check_probabilities(p: &[f64]) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("empty probability list".into());
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err("probabilities must be finite and non-negative".into());
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOL {
        return Err(format!("probabilities sum to {sum}, expected 1"));
    }
    Ok(())
}

fn class_from_int(v: i64) -> std::result::Result<Option<usize>, String> {
    match v {
        -1 => Ok(None),
        v if v >= 0 => Ok(Some(v as usize)),
        v => Err(format!("class {v} is negative; use -1 for unlabeled")),
    }
}

/// Parses one CSV label cell.
pub fn parse_label(cell: &str) -> std::result::Result<LabelAssignment, String> {
    let t = cell.trim();
    if t.is_empty() {
        return Ok(LabelAssignment::Unlabeled);
    }
    let is_list = t.starts_with('[') || t.contains([',', ';', ' ']);
    if is_list {
        let inner = t.trim_start_matches('[').trim_end_matches(']');
        let probs = inner
            .split([',', ';', ' '])
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad probability `{s}`: {e}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        check_probabilities(&probs)?;
        return Ok(LabelAssignment::Prediction(probs));
    }
    let v: i64 = t.parse().map_err(|_| format!("bad label `{t}`"))?;
    Ok(match class_from_int(v)? {
        Some(c) => LabelAssignment::GroundTruth(c),
        None => LabelAssignment::Unlabeled,
    })
}

fn parse_true_label(cell: &str) -> std::result::Result<Option<usize>, String> {
    let t = cell.trim();
    if t.is_empty() {
        return Ok(None);
    }
    class_from_int(t.parse().map_err(|_| format!("bad true_label `{t}`"))?)
}

struct Columns {
    features: Vec<usize>,
    label: Option<usize>,
    true_label: Option<usize>,
    width: usize,
}

fn assemble(rows: Vec<Vec<f64>>, dim: usize, name: &str) -> Result<FeatureMatrix> {
    if rows.is_empty() {
        return Err(CliError::Data(format!("{name}: no data rows")));
    }
    if rows.len() > MAX_ROWS {
        return Err(pmlp_core::Error::TooManyRows(rows.len(), MAX_ROWS).into());
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((n, dim), flat).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(FeatureMatrix::new(data)?)
}

pub fn read_csv<R: Read>(reader: R, name: &str) -> Result<LabeledData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut columns: Option<Columns> = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| {
            let line = e.position().map_or(line, |p| p.line() as usize);
            parse_err(name, line, e.to_string())
        })?;
        let line = record.position().map_or(line, |p| p.line() as usize);

        if columns.is_none() {
            let first = record.get(0).unwrap_or("");
            if first.parse::<f64>().is_err() {
                let names: Vec<String> = record.iter().map(|s| s.to_ascii_lowercase()).collect();
                let label = names.iter().position(|s| s == "label");
                let true_label = names.iter().position(|s| s == "true_label");
                let feats: Vec<usize> = (0..names.len())
                    .filter(|&c| Some(c) != label && Some(c) != true_label)
                    .collect();
                if feats.is_empty() {
                    return Err(parse_err(name, line, "header names no feature columns"));
                }
                columns = Some(Columns {
                    features: feats,
                    label,
                    true_label,
                    width: names.len(),
                });
                continue;
            }
            if record.len() < 2 {
                return Err(parse_err(name, line, "need at least one feature column and a label"));
            }
            columns = Some(Columns {
                features: (0..record.len() - 1).collect(),
                label: Some(record.len() - 1),
                true_label: None,
                width: record.len(),
            });
        }
        let cols = columns.as_ref().expect("set above");
        if record.len() != cols.width {
            return Err(parse_err(
                name,
                line,
                format!("expected {} fields, found {}", cols.width, record.len()),
            ));
        }
        let row = cols
            .features
            .iter()
            .map(|&c| {
                let cell = &record[c];
                cell.parse::<f64>()
                    .map_err(|_| parse_err(name, line, format!("bad number `{cell}` in column {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(row);
        labels.push(match cols.label {
            Some(c) => parse_label(&record[c]).map_err(|m| parse_err(name, line, m))?,
            None => LabelAssignment::Unlabeled,
        });
        if let Some(c) = cols.true_label {
            truth.push(parse_true_label(&record[c]).map_err(|m| parse_err(name, line, m))?);
        }
    }
    let cols = columns.ok_or_else(|| CliError::Data(format!("{name}: empty file")))?;
    let features = assemble(features, cols.features.len(), name)?;
    Ok(LabeledData {
        features,
        labels,
        true_labels: cols.true_label.map(|_| truth),
    })
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum JsonLabel {
    Class(i64),
    Probabilities(Vec<f64>),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    features: Vec<f64>,
    #[serde(default)]
    label: Option<JsonLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_label: Option<i64>,
}

pub fn read_jsonl<R: BufRead>(reader: R, name: &str) -> Result<LabeledData> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    let mut any_truth = false;
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| parse_err(name, line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&text).map_err(|e| parse_err(name, line_no, e.to_string()))?;
        let d = *dim.get_or_insert(row.features.len());
        if row.features.len() != d {
            return Err(parse_err(
                name,
                line_no,
                format!("expected {d} features, found {}", row.features.len()),
            ));
        }
        let label = match row.label {
            None => LabelAssignment::Unlabeled,
            Some(JsonLabel::Class(v)) => match class_from_int(v).map_err(|m| parse_err(name, line_no, m))? {
                Some(c) => LabelAssignment::GroundTruth(c),
                None => LabelAssignment::Unlabeled,
            },
            Some(JsonLabel::Probabilities(p)) => {
                check_probabilities(&p).map_err(|m| parse_err(name, line_no, m))?;
                LabelAssignment::Prediction(p)
            }
        };
        let t = match row.true_label {
            Some(v) => {
                any_truth = true;
                class_from_int(v).map_err(|m| parse_err(name, line_no, m))?
            }
            None => None,
        };
        features.push(row.features);
        labels.push(label);
        truth.push(t);
    }
    let dim = dim.ok_or_else(|| CliError::Data(format!("{name}: empty file")))?;
    if dim == 0 {
        return Err(CliError::Data(format!("{name}: rows have no features")));
    }
    Ok(LabeledData {
        features: assemble(features, dim, name)?,
        labels,
        true_labels: any_truth.then_some(truth),
    })
}

fn label_cell(label: &LabelAssignment) -> String {
    match label {
        LabelAssignment::GroundTruth(c) => c.to_string(),
        LabelAssignment::Unlabeled => "-1".into(),
        LabelAssignment::Prediction(p) => {
            let parts: Vec<String> = p.iter().map(f64::to_string).collect();
            format!("[{}]", parts.join(","))
        }
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Data(format!("csv write failed: {e}"))
}

/// Writes a header row, then one record per sample. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &LabeledData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = data.features.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("f_{j}")).collect();
    header.push("label".into());
    if data.true_labels.is_some() {
        header.push("true_label".into());
    }
    w.write_record(&header).map_err(csv_error)?;
    for (t, label) in data.labels.iter().enumerate() {
        let mut rec: Vec<String> = data.features.row(t).iter().map(f64::to_string).collect();
        rec.push(label_cell(label));
        if let Some(truth) = &data.true_labels {
            rec.push(truth[t].map_or("-1".into(), |c| c.to_string()));
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::io("<csv output>", e))
}

pub fn write_jsonl<W: Write>(data: &LabeledData, mut out: W) -> Result<()> {
    for (t, label) in data.labels.iter().enumerate() {
        let row = JsonRow {
            features: data.features.row(t).to_vec(),
            label: match label {
                LabelAssignment::GroundTruth(c) => Some(JsonLabel::Class(*c as i64)),
                LabelAssignment::Unlabeled => None,
                LabelAssignment::Prediction(p) => Some(JsonLabel::Probabilities(p.clone())),
            },
            true_label: data.true_labels.as_ref().map(|tl| tl[t].map_or(-1, |c| c as i64)),
        };
        let line = serde_json::to_string(&row).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| CliError::io("<jsonl output>", e))?;
    }
    Ok(())
}

pub fn write_dataset(data: &LabeledData, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    match format {
        Format::Csv => write_csv(data, &mut buf)?,
        Format::Jsonl => write_jsonl(data, &mut buf)?,
    }
    buf.flush().map_err(|e| CliError::io(path, e))
}
