//! Cross-product experiment grids with resumable, parallel execution.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiment::results::{append_rows, read_results, sort_rows, write_results, ResultRow};
use crate::experiment::{load_series, run_resolved, ExperimentSpec, ResolvedSpec, TrainOverrides};
use crate::model::{ModelKind, SegInference};
use crate::par;

/// A grid config file.
///
/// ```toml
/// datasets = ["hospital"]
/// models = ["base-lstm", "seg-lstm"]
/// k = [0, 1, 2, 3]
/// target_pcc = [1.0, 0.9, 0.5]
/// seeds = [1, 2, 3, 4, 5]      # k = 0 cells
/// covariate_seeds = [1]        # k > 0 cells
/// skip_sets = [[]]
///
/// [train]
/// epochs = 100
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub datasets: Vec<String>,
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default = "zero_k")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub target_pcc: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default = "no_skip")]
    pub skip_sets: Vec<Vec<usize>>,
    #[serde(default = "univariate_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "covariate_seeds")]
    pub covariate_seeds: Vec<u64>,
    pub context: Option<usize>,
    pub horizon: Option<usize>,
    pub segment: Option<usize>,
    /// Applied to seg-lstm cells only.
    pub seg_inference: Option<SegInference>,
    /// Overrides `$COVCAST_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainOverrides,
}

fn zero_k() -> Vec<usize> {
    vec![0]
}

fn no_skip() -> Vec<Vec<usize>> {
    vec![Vec::new()]
}

fn univariate_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn covariate_seeds() -> Vec<u64> {
    vec![1]
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Every concrete experiment of the grid.
    ///
    /// `k = 0` cells take one run per entry of `seeds`. Covariate cells
    /// cross `target_pcc` (or `gamma`), `skip_sets` and `covariate_seeds`;
    /// skip sets that are not a proper subset of `1..=k` are left out for
    /// that `k`.
    pub fn expand(&self) -> Result<Vec<ExperimentSpec>> {
        if !self.target_pcc.is_empty() && !self.gamma.is_empty() {
            return Err(Error::Config("grid takes target_pcc or gamma, not both".into()));
        }
        if self.k.iter().any(|&k| k > 0) && self.target_pcc.is_empty() && self.gamma.is_empty() {
            return Err(Error::Config("covariate cells need target_pcc or gamma values".into()));
        }
        let mut out = Vec::new();
        for dataset in &self.datasets {
            for &model in &self.models {
                let base = ExperimentSpec {
                    context: self.context,
                    horizon: self.horizon,
                    segment: if model == ModelKind::SegLstm {
                        self.segment
                    } else {
                        None
                    },
                    seg_inference: if model == ModelKind::SegLstm {
                        self.seg_inference
                    } else {
                        None
                    },
                    data_file: match (&self.data_dir, crate::tsf::dataset_file_name(dataset)) {
                        (Some(dir), Some(name)) => Some(dir.join(name)),
                        (Some(dir), None) => Some(dir.join(format!("{dataset}.tsf"))),
                        _ => None,
                    },
                    train: self.train.clone(),
                    ..ExperimentSpec::new(dataset, model)
                };
                for &k in &self.k {
                    if k == 0 {
                        for &seed in &self.seeds {
                            out.push(ExperimentSpec { seed, ..base.clone() });
                        }
                        continue;
                    }
                    let levels: Vec<(Option<f64>, Option<f64>)> = if self.gamma.is_empty() {
                        self.target_pcc.iter().map(|&p| (Some(p), None)).collect()
                    } else {
                        self.gamma.iter().map(|&g| (None, Some(g))).collect()
                    };
                    for (target_pcc, gamma) in levels {
                        for skip in &self.skip_sets {
                            if skip.iter().any(|&j| j == 0 || j > k) || skip.len() >= k {
                                continue;
                            }
                            for &seed in &self.covariate_seeds {
                                out.push(ExperimentSpec {
                                    k,
                                    target_pcc,
                                    gamma,
                                    skip: skip.clone(),
                                    seed,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        for s in &out {
            s.resolve()?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GridOutcome {
    /// Consolidated, sorted rows (resumed and new).
    pub rows: Vec<ResultRow>,
    /// Cells that ran in this invocation.
    pub executed: usize,
    /// Cells skipped because their row already existed.
    pub skipped: usize,
    /// `(spec summary, error)` for every failed cell.
    pub failures: Vec<(String, String)>,
}

type Loaded = Arc<(Vec<String>, Vec<Vec<f64>>)>;

/// Run a grid from disk data. Results go to `<out>/results.csv`.
pub fn run_grid(grid: &GridSpec, out: &Path, parallelism: usize, resume: bool) -> Result<GridOutcome> {
    let cells = grid.expand()?;
    let cache: Mutex<HashMap<(PathBuf, usize), Loaded>> = Mutex::new(HashMap::new());
    run_cells(&cells, out, parallelism, resume, |spec, resolved| {
        let key = (spec.data_path()?, resolved.context + resolved.horizon);
        if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let loaded: Loaded = Arc::new(load_series(spec, resolved)?);
        cache.lock().expect("cache lock").insert(key, loaded.clone());
        Ok(loaded)
    })
}

/// Run `cells` with a custom data loader.
///
/// Without `resume`, `<out>/results.csv` starts empty. With it, cells whose
/// config hash already has a row are skipped. Each finished row is appended
/// immediately under a lock; the file is rewritten sorted at the end.
pub fn run_cells<L>(
    cells: &[ExperimentSpec],
    out: &Path,
    parallelism: usize,
    resume: bool,
    load: L,
) -> Result<GridOutcome>
where
    L: Fn(&ExperimentSpec, &ResolvedSpec) -> Result<Loaded> + Sync,
{
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results_path = out.join("results.csv");
    let previous = if resume && results_path.exists() {
        read_results(&results_path)?
    } else {
        Vec::new()
    };
    write_results(&results_path, &previous)?;
    let done: HashSet<&str> = previous.iter().map(|r| r.config_hash.as_str()).collect();
    let resolved: Vec<ResolvedSpec> = cells.iter().map(|c| c.resolve()).collect::<Result<_>>()?;
    let todo: Vec<usize> = (0..cells.len())
        .filter(|&i| !done.contains(resolved[i].config_hash().as_str()))
        .collect();
    let skipped = cells.len() - todo.len();

    let writer = Mutex::new(());
    let outcomes: Vec<Result<ResultRow>> = par::with_threads(parallelism.max(1), || {
        par::map(&todo, |&i| {
            let (ids, series) = &*load(&cells[i], &resolved[i])?;
            let outcome = run_resolved(&resolved[i], ids.clone(), series, Some(out))?;
            let _guard = writer.lock().expect("results lock");
            append_rows(&results_path, std::slice::from_ref(&outcome.row))?;
            Ok(outcome.row)
        })
    });

    let mut rows = previous;
    let mut failures = Vec::new();
    for (&i, r) in todo.iter().zip(outcomes) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                let c = &cells[i];
                let label = format!("{} {} k={} seed={}", c.dataset, c.model, c.k, c.seed);
                log::error!("{label}: {e}");
                failures.push((label, e.to_string()));
            }
        }
    }
    sort_rows(&mut rows);
    write_results(&results_path, &rows)?;
    Ok(GridOutcome {
        rows,
        executed: todo.len(),
        skipped,
        failures,
    })
}
