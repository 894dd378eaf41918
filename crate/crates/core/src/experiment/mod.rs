//! Experiment specifications, the single-run pipeline, grids and reports.
//!
//! A run goes ingest → augment (k > 0) → fit → evaluate and leaves these
//! artifacts in `<out>/<experiment_id>/`:
//!
//! * `spec.toml`: the resolved specification
//! * `checkpoint.txt`: best parameters
//! * `fit.csv`: per-epoch losses
//! * `trajectory.csv`: prefix sMAPE per horizon step
//! * `result.csv`: the results row
//! * `FAILED`: present only if the run aborted, with the reason
//!
//! and appends its row to `<out>/results.csv`.

pub mod grid;
pub mod reference;
pub mod report;
pub mod results;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use grid::{run_grid, GridOutcome, GridSpec};
pub use report::{report, ReportFiles};
pub use results::{append_rows, read_results, sort_rows, write_results, ResultRow};

use crate::data::{augment_dataset, gamma_for_target_pcc, mean_realized_pcc, ForecastDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::model::{save_checkpoint, ModelConfig, ModelKind, SegInference};
use crate::train::{fit, FitReport, TrainConfig};
use crate::tsf::{dataset_defaults, dataset_file_name, read_tsf_file, DatasetPolicy, MissingValueAction};

/// Environment variable naming the directory that holds the `.tsf` files.
pub const DATA_DIR_ENV: &str = "COVCAST_DATA_DIR";

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-field overrides of the default training configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub batches_per_epoch: Option<usize>,
    pub weight_decay: Option<f64>,
    pub dropout: Option<f64>,
    pub patience: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            batches_per_epoch: self.batches_per_epoch.unwrap_or(base.batches_per_epoch),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            dropout: self.dropout.unwrap_or(base.dropout),
            patience: self.patience.unwrap_or(base.patience),
            seed: base.seed,
        }
    }
}

/// One experiment, as written in a run config file.
///
/// ```toml
/// dataset = "hospital"
/// model = "base-lstm"
/// k = 3
/// target_pcc = 1.0     # or: gamma = 0.4
/// skip = [2]
/// seed = 42
///
/// [train]
/// epochs = 20
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub model: ModelKind,
    #[serde(default)]
    pub k: usize,
    pub target_pcc: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(default)]
    pub skip: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub context: Option<usize>,
    pub horizon: Option<usize>,
    pub segment: Option<usize>,
    /// Segment-model inference mode (default `rolling`).
    pub seg_inference: Option<SegInference>,
    /// Explicit `.tsf` path; otherwise the canonical file under
    /// `$COVCAST_DATA_DIR`.
    pub data_file: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainOverrides,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentSpec {
    pub fn new(dataset: &str, model: ModelKind) -> Self {
        ExperimentSpec {
            dataset: dataset.to_string(),
            model,
            k: 0,
            target_pcc: None,
            gamma: None,
            skip: Vec::new(),
            seed: 1,
            context: None,
            horizon: None,
            segment: None,
            seg_inference: None,
            data_file: None,
            train: TrainOverrides::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Check field combinations and fill in dataset defaults.
    pub fn resolve(&self) -> Result<ResolvedSpec> {
        if self.k == 0 {
            if self.gamma.is_some() || self.target_pcc.is_some() || !self.skip.is_empty() {
                return Err(Error::Config("k = 0 takes no gamma, target_pcc or skip".into()));
            }
        } else {
            match (self.gamma, self.target_pcc) {
                (Some(_), Some(_)) => return Err(Error::Config("give either gamma or target_pcc, not both".into())),
                (None, None) => return Err(Error::Config("k > 0 needs gamma or target_pcc".into())),
                (Some(g), None) if !(g >= 0.0 && g.is_finite()) => {
                    return Err(Error::Config(format!("gamma {g} must be a non-negative number")))
                }
                (None, Some(p)) if !(p > 0.0 && p <= 1.0) => {
                    return Err(Error::Config(format!("target_pcc {p} not in (0, 1]")))
                }
                _ => {}
            }
            let mut skip = self.skip.clone();
            skip.sort_unstable();
            skip.dedup();
            if skip.iter().any(|&j| j == 0 || j > self.k) || skip.len() >= self.k {
                return Err(Error::Config(format!(
                    "skip set {:?} must be a proper subset of 1..={}",
                    self.skip, self.k
                )));
            }
        }
        let defaults = dataset_defaults(&self.dataset).ok();
        let need = |v: Option<usize>, d: Option<usize>, what: &str| {
            v.or(d)
                .ok_or_else(|| Error::Config(format!("dataset {:?} needs an explicit {what}", self.dataset)))
        };
        let horizon = need(self.horizon, defaults.map(|c| c.horizon), "horizon")?;
        let (context, segment) = match self.model {
            ModelKind::BaseLstm => {
                if self.segment.is_some_and(|d| d != 1) || self.seg_inference.is_some() {
                    return Err(Error::Config(
                        "base-lstm takes no segment length or segment inference mode".into(),
                    ));
                }
                (need(self.context, defaults.map(|c| c.base_context), "context")?, 1)
            }
            ModelKind::SegLstm => (
                need(self.context, defaults.map(|c| c.seg_context()), "context")?,
                need(self.segment, defaults.map(|c| c.seasonality), "segment")?,
            ),
        };
        if context == 0 || horizon == 0 || segment == 0 {
            return Err(Error::Config("context, horizon and segment must be positive".into()));
        }
        if context % segment != 0 {
            return Err(Error::Config(format!(
                "context {context} is not a multiple of segment {segment}"
            )));
        }
        let train = self.train.apply(TrainConfig::for_model(self.model, self.seed));
        train.validate()?;
        let mut skip = self.skip.clone();
        skip.sort_unstable();
        skip.dedup();
        Ok(ResolvedSpec {
            dataset: self.dataset.to_ascii_lowercase(),
            model: self.model,
            k: self.k,
            target_pcc: self.target_pcc,
            gamma: self.gamma,
            skip,
            seed: self.seed,
            context,
            horizon,
            segment,
            seg_inference: self.seg_inference.unwrap_or_default(),
            train,
        })
    }

    /// Dataset file for this spec.
    pub fn data_path(&self) -> Result<PathBuf> {
        if let Some(p) = &self.data_file {
            return Ok(p.clone());
        }
        let name = dataset_file_name(&self.dataset)
            .ok_or_else(|| Error::Config(format!("no data_file given for dataset {:?}", self.dataset)))?;
        let dir = std::env::var_os(DATA_DIR_ENV)
            .ok_or_else(|| Error::Config(format!("set {DATA_DIR_ENV} or give data_file")))?;
        Ok(PathBuf::from(dir).join(name))
    }
}

/// A validated spec with every default filled in. Its TOML rendering is
/// hashed into the results row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedSpec {
    pub dataset: String,
    pub model: ModelKind,
    pub k: usize,
    pub target_pcc: Option<f64>,
    pub gamma: Option<f64>,
    pub skip: Vec<usize>,
    pub seed: u64,
    pub context: usize,
    pub horizon: usize,
    pub segment: usize,
    pub seg_inference: SegInference,
    pub train: TrainConfig,
}

impl ResolvedSpec {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved spec serializes")
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn k_active(&self) -> usize {
        self.k - self.skip.len()
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = match self.model {
            ModelKind::BaseLstm => ModelConfig::base(self.k_active()),
            ModelKind::SegLstm => ModelConfig::seg(self.k_active(), self.segment),
        };
        cfg.dropout = self.train.dropout;
        cfg.seg_inference = self.seg_inference;
        cfg
    }

    pub fn skip_label(&self) -> String {
        self.skip.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";")
    }

    /// Run label such as `traffic-base-lstm-cov-2-pearsn-1.0-pl-8-seed-42-skip-1`.
    ///
    /// `cov` counts active covariates, `pearsn` is the realized mean PCC
    /// rounded to one decimal, `pl` the horizon and `skip` the number of
    /// omitted leads.
    pub fn experiment_id(&self, mean_pcc: Option<f64>) -> String {
        let mut id = format!("{}-{}-cov-{}", self.dataset, self.model, self.k_active());
        if self.k > 0 {
            match mean_pcc {
                Some(p) => id.push_str(&format!("-pearsn-{p:.1}")),
                None => id.push_str("-pearsn-na"),
            }
            if let Some(g) = self.gamma {
                id.push_str(&format!("-gamma-{g}"));
            }
        }
        id.push_str(&format!("-pl-{}-seed-{}", self.horizon, self.seed));
        if !self.skip.is_empty() {
            id.push_str(&format!("-skip-{}", self.skip.len()));
        }
        id
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub metrics: MetricsReport,
    pub fit: FitReport,
    pub dir: Option<PathBuf>,
}

/// Read the dataset file named by `spec`, dropping series too short for one
/// evaluation window.
pub fn load_series(spec: &ExperimentSpec, resolved: &ResolvedSpec) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = spec.data_path()?;
    let policy = DatasetPolicy::new(resolved.context + resolved.horizon, MissingValueAction::RejectSeries);
    let (meta, records) = read_tsf_file(&path, &policy)?;
    if meta.rejected_series > 0 {
        log::warn!(
            "{}: skipped {} series (too short or missing values)",
            path.display(),
            meta.rejected_series
        );
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("{} holds no usable series", path.display())));
    }
    Ok(records.into_iter().map(|r| (r.series_id, r.values)).unzip())
}

/// Load the spec's dataset and run it. With `out`, the row is also appended
/// to `<out>/results.csv`.
pub fn run(spec: &ExperimentSpec, out: Option<&Path>) -> Result<RunOutcome> {
    let resolved = spec.resolve()?;
    let (ids, series) = load_series(spec, &resolved)?;
    let outcome = run_resolved(&resolved, ids, &series, out)?;
    if let Some(o) = out {
        append_rows(&o.join("results.csv"), std::slice::from_ref(&outcome.row))?;
    }
    Ok(outcome)
}

/// Run a resolved spec on in-memory series. Writes the per-run directory
/// but not the shared results file.
pub fn run_resolved(
    resolved: &ResolvedSpec,
    ids: Vec<String>,
    series: &[Vec<f64>],
    out: Option<&Path>,
) -> Result<RunOutcome> {
    let (gamma, augmented) = if resolved.k == 0 {
        (None, augment_dataset(series, 0, 0.0, resolved.seed, &[])?)
    } else {
        let gamma = match (resolved.gamma, resolved.target_pcc) {
            (Some(g), _) => g,
            (None, Some(p)) => gamma_for_target_pcc(series, resolved.k, p, resolved.seed)?.gamma,
            (None, None) => unreachable!("resolve() requires one of them"),
        };
        (
            Some(gamma),
            augment_dataset(series, resolved.k, gamma, resolved.seed, &resolved.skip)?,
        )
    };
    let mean_pcc = if resolved.k == 0 {
        None
    } else {
        mean_realized_pcc(&augmented)
    };
    let id = resolved.experiment_id(mean_pcc);
    let dir = out.map(|o| o.join(&id));
    if let Some(d) = &dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        let _ = fs::remove_file(d.join("FAILED"));
        write(&d.join("spec.toml"), &resolved.to_toml())?;
    }
    let result = (|| -> Result<RunOutcome> {
        let ds = ForecastDataset::new(ids, augmented, resolved.context, resolved.horizon)?;
        let (model, fit_report) = fit(&resolved.model_config(), &ds, &resolved.train)?;
        if let Some(d) = &dir {
            save_checkpoint(&d.join("checkpoint.txt"), &model)?;
            fit_report.write_csv(&d.join("fit.csv"))?;
        }
        if let Some(reason) = &fit_report.failure {
            return Err(Error::NonFinite(format!("training aborted: {reason}")));
        }
        let metrics = evaluate(&model, &ds, Split::Test)?;
        let row = ResultRow {
            experiment_id: id.clone(),
            dataset: resolved.dataset.clone(),
            model: resolved.model.to_string(),
            k: resolved.k,
            skip_set: resolved.skip_label(),
            target_pcc: resolved.target_pcc,
            gamma,
            mean_pcc,
            seed: resolved.seed,
            context: resolved.context,
            horizon: resolved.horizon,
            d: resolved.segment,
            smape: metrics.smape,
            mae: metrics.mae,
            rmse: metrics.rmse,
            n_series: metrics.n_series,
            n_excluded: metrics.n_excluded(),
            best_epoch: fit_report.best_epoch,
            train_seconds: fit_report.seconds,
            config_hash: resolved.config_hash(),
            code_version: CODE_VERSION.to_string(),
        };
        if let Some(d) = &dir {
            write(&d.join("trajectory.csv"), &trajectory_csv(&id, &metrics.trajectory))?;
            write_results(&d.join("result.csv"), std::slice::from_ref(&row))?;
        }
        Ok(RunOutcome {
            row,
            metrics,
            fit: fit_report,
            dir: dir.clone(),
        })
    })();
    if let (Err(e), Some(d)) = (&result, &dir) {
        let _ = fs::write(d.join("FAILED"), format!("{e}\n"));
    }
    result
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn trajectory_csv(id: &str, trajectory: &[f64]) -> String {
    let mut out = String::from("experiment_id,t,smape_t\n");
    for (t, v) in trajectory.iter().enumerate() {
        out.push_str(&format!("{id},{},{v}\n", t + 1));
    }
    out
}
