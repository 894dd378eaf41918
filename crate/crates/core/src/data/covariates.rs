//! Leading-indicator covariates with controlled cross-correlation.
//!
//! Covariate `j` at time `t` is `y[t+j] + γ·μ·ε + γ·σ·ε`, with one standard
//! normal `ε` per value and `μ`, `σ` the mean and population standard
//! deviation of the whole series.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{par, rng};

/// One synthesized covariate column. `values[t]` leads `y[t + lead]`, so the
/// column is `lead` entries shorter than the target.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariate {
    pub lead: usize,
    pub values: Vec<f64>,
    /// Pearson coefficient against the lead-aligned target; `None` when the
    /// aligned target is constant.
    pub realized_pcc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSeries {
    pub y: Vec<f64>,
    pub k: usize,
    pub gamma: f64,
    /// Leads (1-based) left out of `covariates`.
    pub skip: Vec<usize>,
    /// Active covariates in increasing lead order.
    pub covariates: Vec<Covariate>,
    pub mu: f64,
    pub sigma: f64,
}

impl AugmentedSeries {
    /// Target only, no covariates.
    pub fn univariate(y: Vec<f64>) -> Self {
        let (mu, sigma) = mean_std(&y);
        AugmentedSeries {
            y,
            k: 0,
            gamma: 0.0,
            skip: Vec::new(),
            covariates: Vec::new(),
            mu,
            sigma,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn k_active(&self) -> usize {
        self.covariates.len()
    }

    pub fn realized_pcc(&self) -> Vec<Option<f64>> {
        self.covariates.iter().map(|c| c.realized_pcc).collect()
    }

    /// Channel `c` at time `t`: channel 0 is the target, channel `i ≥ 1` the
    /// `i`-th active covariate. `None` where the value is undefined.
    pub fn channel_value(&self, c: usize, t: usize) -> Option<f64> {
        if c == 0 {
            self.y.get(t).copied()
        } else {
            self.covariates.get(c - 1)?.values.get(t).copied()
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(y: &[f64]) -> (f64, f64) {
    if y.is_empty() {
        return (0.0, 0.0);
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Pearson correlation coefficient.
pub fn pearson_cc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "pearson_cc lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Argument("pearson_cc needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Noise factors `0.0, 0.1, …, 1.9`.
pub fn gamma_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 10.0).collect()
}

fn validate_leads(len: usize, k: usize, skip: &[usize]) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("covariate count k must be at least 1".into()));
    }
    if k >= len {
        return Err(Error::Argument(format!("k = {k} must be below series length {len}")));
    }
    if let Some(s) = skip.iter().find(|&&s| s == 0 || s > k) {
        return Err(Error::Argument(format!("skipped lead {s} outside 1..={k}")));
    }
    if (1..=k).all(|j| skip.contains(&j)) {
        return Err(Error::Argument("skip set removes every covariate".into()));
    }
    Ok(())
}

/// Build `k` lead covariates for `y`.
///
/// Noise is drawn for every lead, skipped or not, in lead-major order, so
/// the remaining columns are bitwise identical to an unskipped generation
/// from the same generator state.
pub fn synthesize_covariates<R: Rng + ?Sized>(
    y: &[f64],
    k: usize,
    gamma: f64,
    rng: &mut R,
    skip: &[usize],
) -> Result<AugmentedSeries> {
    validate_leads(y.len(), k, skip)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Argument(format!(
            "gamma {gamma} must be finite and non-negative"
        )));
    }
    let (mu, sigma) = mean_std(y);
    let mut covariates = Vec::with_capacity(k);
    for lead in 1..=k {
        let values: Vec<f64> = y[lead..]
            .iter()
            .map(|&target| {
                let eps: f64 = rng.sample(StandardNormal);
                target + gamma * mu * eps + gamma * sigma * eps
            })
            .collect();
        if skip.contains(&lead) {
            continue;
        }
        let realized_pcc = pearson_cc(&values, &y[lead..]).ok();
        covariates.push(Covariate {
            lead,
            values,
            realized_pcc,
        });
    }
    let mut skip = skip.to_vec();
    skip.sort_unstable();
    skip.dedup();
    Ok(AugmentedSeries {
        y: y.to_vec(),
        k,
        gamma,
        skip,
        covariates,
        mu,
        sigma,
    })
}

/// Augment every series; series `i` draws from stream `i` of `seed`.
pub fn augment_dataset(
    series: &[Vec<f64>],
    k: usize,
    gamma: f64,
    seed: u64,
    skip: &[usize],
) -> Result<Vec<AugmentedSeries>> {
    if k == 0 {
        return Ok(series.iter().cloned().map(AugmentedSeries::univariate).collect());
    }
    par::map_range(series.len(), |i| {
        let mut r = rng::stream(seed, i as u64);
        synthesize_covariates(&series[i], k, gamma, &mut r, skip)
    })
    .into_iter()
    .collect()
}

/// Mean of every defined per-series, per-lead PCC.
pub fn mean_realized_pcc(series: &[AugmentedSeries]) -> Option<f64> {
    let vals: Vec<f64> = series
        .iter()
        .flat_map(|s| s.covariates.iter().filter_map(|c| c.realized_pcc))
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaChoice {
    pub gamma: f64,
    pub mean_pcc: f64,
}

/// Mean realized PCC for each grid γ, using the same noise draws per γ.
pub fn pcc_sweep(series_set: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<GammaChoice>> {
    if series_set.is_empty() {
        return Err(Error::Argument("empty series set".into()));
    }
    gamma_grid()
        .into_iter()
        .map(|gamma| {
            let aug = augment_dataset(series_set, k, gamma, seed, &[])?;
            let mean_pcc = mean_realized_pcc(&aug)
                .ok_or_else(|| Error::UndefinedCorrelation("no series has a defined correlation".into()))?;
            Ok(GammaChoice { gamma, mean_pcc })
        })
        .collect()
}

/// Grid γ whose dataset-mean realized PCC is closest to `target_pcc`
/// (ties go to the smaller γ).
pub fn gamma_for_target_pcc(series_set: &[Vec<f64>], k: usize, target_pcc: f64, seed: u64) -> Result<GammaChoice> {
    if !(target_pcc > 0.0 && target_pcc <= 1.0) {
        return Err(Error::Argument(format!("target PCC {target_pcc} not in (0, 1]")));
    }
    let sweep = pcc_sweep(series_set, k, seed)?;
    let mut best = sweep[0];
    for c in &sweep[1..] {
        if (c.mean_pcc - target_pcc).abs() < (best.mean_pcc - target_pcc).abs() {
            best = *c;
        }
    }
    Ok(best)
}
