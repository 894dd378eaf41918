//! Comparison tables and plot data from a results CSV.
//!
//! Files written to the output directory:
//!
//! * `benchmark.csv`: univariate runs per dataset/model/metric with mean,
//!   95% CI, reference value and delta (measured − reference)
//! * `covariate_table.csv`: every `(k, PCC)` cell per metric next to its
//!   reference; `k = 0` is repeated unchanged under each PCC column
//! * `pcc_curve_<dataset>_k<k>.csv`: sMAPE against PCC, one row per model
//!   and PCC level
//! * `trajectories.csv`: prefix sMAPE per experiment, gathered from the
//!   run directories next to the results file

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::ci95;
use crate::experiment::reference::{self, Metric, NOMINAL_PCC};
use crate::experiment::results::{read_results, ResultRow};
use crate::model::ModelKind;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
}

fn metric_value(r: &ResultRow, m: Metric) -> f64 {
    match m {
        Metric::Smape => r.smape,
        Metric::Mae => r.mae,
        Metric::Rmse => r.rmse,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Nominal PCC level of a covariate row: its target if one was set, else the
/// realized mean rounded to one decimal.
pub fn pcc_level(r: &ResultRow) -> Option<f64> {
    r.target_pcc.or_else(|| r.mean_pcc.map(|p| (p * 10.0).round() / 10.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Key for ordered grouping of float levels.
fn level_key(p: Option<f64>) -> i64 {
    p.map_or(i64::MIN, |v| (v * 1e6).round() as i64)
}

pub fn benchmark_table(rows: &[ResultRow]) -> String {
    let mut groups: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.k == 0) {
        groups.entry((r.dataset.clone(), r.model.clone())).or_default().push(r);
    }
    let mut out = String::from("dataset,model,metric,runs,measured,ci95,reference,reference_ci95,delta\n");
    for ((dataset, model), rs) in &groups {
        let kind: Option<ModelKind> = model.parse().ok();
        for m in Metric::ALL {
            let vals: Vec<f64> = rs.iter().map(|r| metric_value(r, m)).collect();
            let (mu, hw) = ci95(&vals).expect("group is non-empty");
            let refv = kind.and_then(|k| reference::univariate(dataset, k, m));
            let _ = writeln!(
                out,
                "{dataset},{model},{},{},{mu},{hw},{},{},{}",
                m.as_str(),
                vals.len(),
                fmt_opt(refv.map(|r| r.0)),
                fmt_opt(refv.map(|r| r.1)),
                fmt_opt(refv.map(|r| mu - r.0)),
            );
        }
    }
    out
}

pub fn covariate_table(rows: &[ResultRow]) -> String {
    type Key = (String, String, usize, i64);
    let mut groups: BTreeMap<Key, (Option<f64>, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.skip_set.is_empty()) {
        let level = if r.k == 0 { None } else { pcc_level(r) };
        groups
            .entry((r.dataset.clone(), r.model.clone(), r.k, level_key(level)))
            .or_insert((level, Vec::new()))
            .1
            .push(r);
    }
    let mut out = String::from("dataset,model,metric,k,pcc,runs,measured,reference,delta\n");
    for ((dataset, model, k, _), (level, rs)) in &groups {
        let kind: Option<ModelKind> = model.parse().ok();
        // the univariate runs are reported once under every PCC column
        let columns: Vec<Option<f64>> = if *k == 0 {
            NOMINAL_PCC.iter().map(|p| Some(*p)).collect()
        } else {
            vec![*level]
        };
        for m in Metric::ALL {
            let measured = mean(&rs.iter().map(|r| metric_value(r, m)).collect::<Vec<_>>());
            for pcc in &columns {
                let refv = match (kind, pcc) {
                    (Some(kind), Some(p)) => reference::cell(dataset, kind, m, *k, *p),
                    _ => None,
                };
                let _ = writeln!(
                    out,
                    "{dataset},{model},{},{k},{},{},{measured},{},{}",
                    m.as_str(),
                    fmt_opt(*pcc),
                    rs.len(),
                    fmt_opt(refv),
                    fmt_opt(refv.map(|r| measured - r)),
                );
            }
        }
    }
    out
}

/// `(dataset, k) → csv text` for every covariate count present.
pub fn pcc_curves(rows: &[ResultRow]) -> BTreeMap<(String, usize), String> {
    type Key = (String, usize, String, i64);
    let mut groups: BTreeMap<Key, (Option<f64>, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.k > 0 && r.skip_set.is_empty()) {
        let level = pcc_level(r);
        groups
            .entry((r.dataset.clone(), r.k, r.model.clone(), -level_key(level)))
            .or_insert((level, Vec::new()))
            .1
            .push(r);
    }
    let mut files: BTreeMap<(String, usize), String> = BTreeMap::new();
    for ((dataset, k, model, _), (level, rs)) in &groups {
        let text = files
            .entry((dataset.clone(), *k))
            .or_insert_with(|| String::from("model,pcc,mean_pcc,gamma,runs,smape,mae,rmse,reference_smape\n"));
        let avg = |f: fn(&ResultRow) -> f64| mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let mean_pcc: Vec<f64> = rs.iter().filter_map(|r| r.mean_pcc).collect();
        let gamma: Vec<f64> = rs.iter().filter_map(|r| r.gamma).collect();
        let refv = match (model.parse::<ModelKind>().ok(), level) {
            (Some(kind), Some(p)) => reference::cell(dataset, kind, Metric::Smape, *k, *p),
            _ => None,
        };
        let _ = writeln!(
            text,
            "{model},{},{},{},{},{},{},{},{}",
            fmt_opt(*level),
            if mean_pcc.is_empty() {
                String::new()
            } else {
                mean(&mean_pcc).to_string()
            },
            if gamma.is_empty() {
                String::new()
            } else {
                mean(&gamma).to_string()
            },
            rs.len(),
            avg(|r| r.smape),
            avg(|r| r.mae),
            avg(|r| r.rmse),
            fmt_opt(refv),
        );
    }
    files
}

fn write(path: PathBuf, text: &str, files: &mut ReportFiles) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.files.push(path);
    Ok(())
}

/// Build every report file from `results_csv` into `out_dir`.
pub fn report(results_csv: &Path, out_dir: &Path) -> Result<ReportFiles> {
    let rows = read_results(results_csv)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = ReportFiles::default();
    write(out_dir.join("benchmark.csv"), &benchmark_table(&rows), &mut files)?;
    write(out_dir.join("covariate_table.csv"), &covariate_table(&rows), &mut files)?;
    for ((dataset, k), text) in pcc_curves(&rows) {
        write(out_dir.join(format!("pcc_curve_{dataset}_k{k}.csv")), &text, &mut files)?;
    }
    let run_root = results_csv.parent().unwrap_or(Path::new("."));
    let mut traj = String::from("experiment_id,t,smape_t\n");
    for r in &rows {
        let p = run_root.join(&r.experiment_id).join("trajectory.csv");
        if let Ok(text) = fs::read_to_string(&p) {
            for line in text.lines().skip(1) {
                traj.push_str(line);
                traj.push('\n');
            }
        }
    }
    write(out_dir.join("trajectories.csv"), &traj, &mut files)?;
    Ok(files)
}
