//! The consolidated results CSV.

use std::fs::{self, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub dataset: String,
    pub model: String,
    pub k: usize,
    /// Omitted leads joined with `;`, empty if none.
    pub skip_set: String,
    pub target_pcc: Option<f64>,
    pub gamma: Option<f64>,
    pub mean_pcc: Option<f64>,
    pub seed: u64,
    #[serde(rename = "C")]
    pub context: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub d: usize,
    pub smape: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n_series: usize,
    pub n_excluded: usize,
    pub best_epoch: usize,
    /// Wall-clock; the only field that differs between identical runs.
    pub train_seconds: f64,
    pub config_hash: String,
    pub code_version: String,
}

pub const COLUMNS: [&str; 21] = [
    "experiment_id",
    "dataset",
    "model",
    "k",
    "skip_set",
    "target_pcc",
    "gamma",
    "mean_pcc",
    "seed",
    "C",
    "H",
    "d",
    "smape",
    "mae",
    "rmse",
    "n_series",
    "n_excluded",
    "best_epoch",
    "train_seconds",
    "config_hash",
    "code_version",
];

impl ResultRow {
    /// Copy with the wall-clock field zeroed.
    pub fn without_timing(&self) -> ResultRow {
        ResultRow {
            train_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Order by `(dataset, model, k, target PCC, gamma, skip set, seed)`.
pub fn sort_rows(rows: &mut [ResultRow]) {
    let opt = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    rows.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.k.cmp(&b.k))
            .then_with(|| opt(b.target_pcc).total_cmp(&opt(a.target_pcc)))
            .then_with(|| opt(a.gamma).total_cmp(&opt(b.gamma)))
            .then_with(|| a.skip_set.cmp(&b.skip_set))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.experiment_id.cmp(&b.experiment_id))
    });
}

pub fn results_to_string(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write `rows` (header included), replacing the file.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    fs::write(path, results_to_string(rows)?).map_err(|e| Error::io(path, e))
}

/// Append rows, writing the header first if the file is new or empty.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let missing: Vec<&str> = COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "results schema: missing columns {}",
            missing.join(", ")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("results schema: {e}"))))
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, k: usize, pcc: Option<f64>, seed: u64) -> ResultRow {
        ResultRow {
            experiment_id: id.into(),
            dataset: "hospital".into(),
            model: "base-lstm".into(),
            k,
            skip_set: String::new(),
            target_pcc: pcc,
            gamma: pcc.map(|_| 0.1),
            mean_pcc: pcc.map(|p| p - 0.01),
            seed,
            context: 15,
            horizon: 12,
            d: 1,
            smape: 17.123456789012345,
            mae: 0.1 + 0.2,
            rmse: 1e-300,
            n_series: 767,
            n_excluded: 0,
            best_epoch: 12,
            train_seconds: 3.5,
            config_hash: "abcdef0123456789".into(),
            code_version: "0.1.0".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![row("a", 0, None, 1), row("b", 2, Some(0.9), 1)];
        let text = results_to_string(&rows).unwrap();
        assert!(text.starts_with("experiment_id,dataset,model,k,skip_set,target_pcc,gamma,mean_pcc,seed,C,H,d,"));
        assert_eq!(parse_results(&text).unwrap(), rows);
    }

    #[test]
    fn empty_is_header_only() {
        let text = results_to_string(&[]).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(parse_results(&text).unwrap().is_empty());
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_results("experiment_id,dataset\nx,y\n").unwrap_err();
        assert!(err.is_config() && err.to_string().contains("smape"));
    }

    #[test]
    fn sort_order() {
        let mut rows = vec![
            row("c", 1, Some(0.5), 1),
            row("b", 1, Some(1.0), 1),
            row("a2", 0, None, 2),
            row("a1", 0, None, 1),
        ];
        sort_rows(&mut rows);
        let ids: Vec<&str> = rows.iter().map(|r| r.experiment_id.as_str()).collect();
        assert_eq!(ids, ["a1", "a2", "b", "c"]);
    }

    #[test]
    fn append_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        append_rows(&p, &[row("a", 0, None, 1)]).unwrap();
        append_rows(&p, &[row("b", 0, None, 2)]).unwrap();
        assert_eq!(read_results(&p).unwrap().len(), 2);
    }
}
