//! Result tables, point files and model files.

use std::fs;
use std::io::Write;
use std::path::Path;

use confkern_core::eval::{ExperimentResult, SyntheticSummary};
use confkern_core::svm::TrainSet;
use confkern_core::text::Weighting;
use confkern_core::{ConformalSpec, KernelSpec, SparseVector, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Column order of every results table.
pub const RESULT_COLUMNS: [&str; 11] = [
    "model",
    "task",
    "norm",
    "tfidf",
    "gamma",
    "C",
    "F1_original",
    "F1_custom",
    "SV_original",
    "SV_custom",
    "p_value",
];

/// One row of a results table. `*_custom` and `p_value` are empty without a
/// transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub task: String,
    pub norm: String,
    pub tfidf: bool,
    pub gamma: Option<f64>,
    pub c: f64,
    pub f1_original: f64,
    pub f1_custom: Option<f64>,
    pub sv_original: f64,
    pub sv_custom: Option<f64>,
    pub p_value: Option<f64>,
}

pub fn model_name(kernel: &KernelSpec, transform: Option<&ConformalSpec>) -> String {
    match transform {
        None => kernel.name().to_string(),
        Some(t) => format!("{}+{}", kernel.name(), t.name()),
    }
}

impl ResultRow {
    pub fn new(
        kernel: &KernelSpec,
        transform: Option<&ConformalSpec>,
        task: String,
        norm: &str,
        weighting: Weighting,
        c: f64,
        r: &ExperimentResult,
    ) -> Self {
        Self {
            model: model_name(kernel, transform),
            task,
            norm: norm.to_string(),
            tfidf: weighting == Weighting::TfIdf,
            gamma: kernel.gamma(),
            c,
            f1_original: r.original.f1,
            f1_custom: r.transformed.as_ref().map(|s| s.f1),
            sv_original: r.original.n_sv,
            sv_custom: r.transformed.as_ref().map(|s| s.n_sv),
            p_value: r.p_value,
        }
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), fmt5);
        vec![
            self.model.clone(),
            self.task.clone(),
            self.norm.clone(),
            if self.tfidf { "yes" } else { "no" }.to_string(),
            opt(self.gamma),
            fmt5(self.c),
            fmt5(self.f1_original),
            opt(self.f1_custom),
            fmt5(self.sv_original),
            opt(self.sv_custom),
            opt(self.p_value),
        ]
    }
}

pub fn fmt5(v: f64) -> String {
    format!("{v:.5}")
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    let mut f = create(&tmp)?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::data(e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    csv_bytes(&RESULT_COLUMNS, rows.iter().map(ResultRow::fields))
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, &results_csv(rows)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub const SYNTH_COLUMNS: [&str; 11] = [
    "boundary",
    "transform",
    "sigma",
    "trials",
    "failed",
    "error_original",
    "error_custom",
    "error_decrease",
    "ci_half_width",
    "SV_original",
    "SV_custom",
];

pub fn synth_csv(
    boundary: &str,
    transform: &str,
    summaries: &[SyntheticSummary],
) -> Result<Vec<u8>> {
    let rows = summaries.iter().map(|s| {
        let n = s.outcomes.len().max(1) as f64;
        let sv_o = s.outcomes.iter().map(|o| o.sv_original as f64).sum::<f64>() / n;
        let sv_c = s
            .outcomes
            .iter()
            .map(|o| o.sv_transformed as f64)
            .sum::<f64>()
            / n;
        vec![
            boundary.to_string(),
            transform.to_string(),
            fmt5(s.sigma),
            s.trials.to_string(),
            s.failed.to_string(),
            fmt5(s.mean_error_original),
            fmt5(s.mean_error_transformed),
            s.error_decrease.map_or(String::new(), fmt5),
            fmt5(s.ci_half_width),
            fmt5(sv_o),
            fmt5(sv_c),
        ]
    });
    csv_bytes(&SYNTH_COLUMNS, rows)
}

/// `x,y,label` rows of a two-dimensional set.
pub fn points_csv(ts: &TrainSet) -> Result<Vec<u8>> {
    let rows = ts.points.iter().zip(&ts.labels).map(|(p, &l)| {
        let (x, y) = (p.get(0), p.get(1));
        vec![format!("{x:?}"), format!("{y:?}"), l.to_string()]
    });
    csv_bytes(&["x", "y", "label"], rows)
}

/// Dense rows of numbers. Lines starting with `#` are comments; a first row
/// that does not parse is taken as a header.
pub fn read_dense_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if n == 0 => continue,
            Err(e) => {
                return Err(CliError::data(format!(
                    "{} row {}: {e}",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().position(|r| r.len() != w) {
            return Err(CliError::data(format!(
                "{}: row {} has {} columns, expected {w}",
                path.display(),
                bad + 1,
                rows[bad].len()
            )));
        }
    }
    Ok(rows)
}

/// Labelled points: every column but the last is a feature, the last is ±1.
pub fn read_labelled(path: &Path) -> Result<TrainSet> {
    let rows = read_dense_rows(path)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let (&label, features) =
            r.split_last()
                .filter(|(_, f)| !f.is_empty())
                .ok_or_else(|| {
                    CliError::data(format!(
                        "{}: row {} needs features and a label",
                        path.display(),
                        i + 1
                    ))
                })?;
        labels.push(match label {
            1.0 => 1,
            -1.0 => -1,
            l => {
                return Err(CliError::data(format!(
                    "{}: row {} label {l} is not ±1",
                    path.display(),
                    i + 1
                )))
            }
        });
        points.push(SparseVector::from_dense(features));
    }
    Ok(TrainSet::new(points, labels)?)
}

pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    crate_version: String,
    model: TrainedModel,
}

pub fn model_json(model: &TrainedModel) -> Result<String> {
    let file = ModelFile {
        format_version: MODEL_FORMAT,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        model: model.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| CliError::data(e.to_string()))
}

pub fn parse_model(json: &str) -> Result<TrainedModel> {
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let v: Version =
        serde_json::from_str(json).map_err(|e| CliError::data(format!("not a model file: {e}")))?;
    if v.format_version != MODEL_FORMAT {
        return Err(CliError::data(format!(
            "model format {} is not supported (expected {MODEL_FORMAT})",
            v.format_version
        )));
    }
    let file: ModelFile = serde_json::from_str(json)
        .map_err(|e| CliError::data(format!("malformed model file: {e}")))?;
    Ok(file.model)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    write_atomic(path, model_json(model)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    parse_model(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_decimals() {
        assert_eq!(fmt5(0.983396), "0.98340");
        assert_eq!(fmt5(1000.0), "1000.00000");
        assert_eq!(fmt5(0.0001), "0.00010");
    }

    #[test]
    fn header_and_empty_optionals() {
        let row = ResultRow {
            model: "gc".into(),
            task: "earn vs rest".into(),
            norm: "l1".into(),
            tfidf: false,
            gamma: Some(0.001),
            c: 1000.0,
            f1_original: 0.9834,
            f1_custom: None,
            sv_original: 321.0,
            sv_custom: None,
            p_value: None,
        };
        let text = String::from_utf8(results_csv(&[row]).unwrap()).unwrap();
        assert_eq!(
            text,
            "model,task,norm,tfidf,gamma,C,F1_original,F1_custom,SV_original,SV_custom,p_value\n\
             gc,earn vs rest,l1,no,0.00100,1000.00000,0.98340,,321.00000,,\n"
        );
    }

    #[test]
    fn dense_rows_with_header_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        fs::write(&p, "x,y,label\n# comment\n0.5, 1.0, 1\n-1,2,-1\n").unwrap();
        let ts = read_labelled(&p).unwrap();
        assert_eq!(ts.labels, vec![1, -1]);
        assert_eq!(ts.points[0].to_dense(), vec![0.5, 1.0]);
        fs::write(&p, "1,2,1\n1,2\n").unwrap();
        assert!(read_dense_rows(&p).is_err());
        fs::write(&p, "1,2,0\n").unwrap();
        assert!(read_labelled(&p).is_err());
    }

    #[test]
    fn model_version_checked() {
        assert!(parse_model(r#"{"format_version": 99}"#).is_err());
        assert!(parse_model("nope").is_err());
    }
}
