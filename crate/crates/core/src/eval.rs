//! Raw-scale error metrics and dataset-level aggregation.
//!
//! Metrics are computed per series over the `H`-step window on the target
//! channel only, then averaged with equal weight per series. A sMAPE term
//! whose prediction and actual are both zero contributes 0.

use crate::data::{evaluation_windows, inverse_scale, scale_batch, ForecastDataset, Split};
use crate::error::{Error, Result};
use crate::model::Model;

/// Largest fraction of series that may be dropped for non-finite forecasts.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

fn check(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::Argument(format!(
            "prediction length {} differs from actual length {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Argument("metrics need at least one value".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let mse = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Symmetric MAPE in percent, in `[0, 200]`.
pub fn smape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let total: f64 = pred.iter().zip(actual).map(|(p, a)| smape_term(*p, *a)).sum();
    Ok(100.0 * total / pred.len() as f64)
}

fn smape_term(p: f64, a: f64) -> f64 {
    let denom = (p.abs() + a.abs()) / 2.0;
    if denom == 0.0 {
        0.0
    } else {
        (p - a).abs() / denom
    }
}

/// Element `t - 1` is the mean over series of sMAPE over the first `t`
/// horizon steps.
pub fn horizon_trajectory(preds: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    if preds.len() != actuals.len() || preds.is_empty() {
        return Err(Error::Argument(
            "trajectory needs matching, non-empty series lists".into(),
        ));
    }
    let h = preds[0].len();
    for (p, a) in preds.iter().zip(actuals) {
        check(p, a)?;
        if p.len() != h {
            return Err(Error::Argument("all series need the same horizon".into()));
        }
    }
    (1..=h)
        .map(|t| {
            let sum = preds
                .iter()
                .zip(actuals)
                .map(|(p, a)| smape(&p[..t], &a[..t]))
                .sum::<Result<f64>>()?;
            Ok(sum / preds.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMetrics {
    pub series_id: String,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_series: Vec<SeriesMetrics>,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub trajectory: Vec<f64>,
    pub n_series: usize,
    pub excluded: Vec<String>,
    /// Raw-unit target forecasts of the included series.
    pub forecasts: Vec<Vec<f64>>,
}

impl MetricsReport {
    pub fn n_excluded(&self) -> usize {
        self.excluded.len()
    }
}

/// Aggregate per-series target forecasts against actuals.
///
/// Series with any non-finite forecast are excluded; if more than
/// [`MAX_EXCLUDED_FRACTION`] of them are, the whole evaluation fails.
pub fn summarize(ids: &[String], preds: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<MetricsReport> {
    if ids.len() != preds.len() || preds.len() != actuals.len() {
        return Err(Error::Argument("ids, predictions and actuals differ in length".into()));
    }
    let mut per_series = Vec::new();
    let mut excluded = Vec::new();
    let (mut kept_p, mut kept_a) = (Vec::new(), Vec::new());
    for ((id, p), a) in ids.iter().zip(preds).zip(actuals) {
        if p.iter().any(|v| !v.is_finite()) {
            excluded.push(id.clone());
            continue;
        }
        per_series.push(SeriesMetrics {
            series_id: id.clone(),
            mae: mae(p, a)?,
            rmse: rmse(p, a)?,
            smape: smape(p, a)?,
        });
        kept_p.push(p.clone());
        kept_a.push(a.clone());
    }
    let n = ids.len();
    if per_series.is_empty() || excluded.len() as f64 > MAX_EXCLUDED_FRACTION * n as f64 {
        return Err(Error::NonFinite(format!(
            "{} of {n} series produced non-finite forecasts",
            excluded.len()
        )));
    }
    let mean = |f: fn(&SeriesMetrics) -> f64| per_series.iter().map(f).sum::<f64>() / per_series.len() as f64;
    Ok(MetricsReport {
        mae: mean(|s| s.mae),
        rmse: mean(|s| s.rmse),
        smape: mean(|s| s.smape),
        trajectory: horizon_trajectory(&kept_p, &kept_a)?,
        n_series: n,
        excluded,
        per_series,
        forecasts: kept_p,
    })
}

/// Free-run every eligible series' `split` window and score the target
/// channel in original units.
pub fn evaluate(model: &Model, ds: &ForecastDataset, split: Split) -> Result<MetricsReport> {
    let raw = evaluation_windows(ds, split)?;
    let scaled = scale_batch(&raw)?;
    let preds = model.free_run(&scaled, ds.horizon)?;
    let preds = inverse_scale(&preds, scaled.scales.as_deref().unwrap_or_default())?;
    let (truth, _) = raw.horizon_truth()?;
    let (b, h) = (raw.batch_size(), ds.horizon);
    let target = |t: &crate::tensor::Tensor, i: usize| -> Vec<f64> { (0..h).map(|s| t.get(&[i, s, 0])).collect() };
    let ids: Vec<String> = raw.series_index.iter().map(|&i| ds.ids[i].clone()).collect();
    let p: Vec<Vec<f64>> = (0..b).map(|i| target(&preds, i)).collect();
    let a: Vec<Vec<f64>> = (0..b).map(|i| target(&truth, i)).collect();
    summarize(&ids, &p, &a)
}

/// Mean and 95% half-width `1.96 · sd / √n` (sample standard deviation).
pub fn ci95(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, 1.96 * var.sqrt() / n.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(mae(&[2.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[2.0], &[1.0]).unwrap(), 1.0);
        assert!((smape(&[2.0], &[1.0]).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!((smape(&[1.0, 3.0], &[2.0, 2.0]).unwrap() - 50.0 * (1.0 / 1.5 + 1.0 / 2.5)).abs() < 1e-12);
        assert!((smape(&[1.0, 3.0], &[2.0, 2.0]).unwrap() - 53.333).abs() < 1e-3);
        let y = [3.0, -1.0, 0.0];
        assert_eq!(
            (mae(&y, &y).unwrap(), rmse(&y, &y).unwrap(), smape(&y, &y).unwrap()),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn zero_over_zero_is_perfect() {
        assert_eq!(smape(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(smape(&[0.0], &[5.0]).unwrap(), 200.0);
    }

    #[test]
    fn length_errors() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(smape(&[], &[]).is_err());
    }

    #[test]
    fn trajectory_examples() {
        let t = horizon_trajectory(&[vec![1.0, 2.0, 4.0]], &[vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(t[0], 0.0);
        assert!(t[1] > 0.0);
        let flat = horizon_trajectory(&[vec![2.0; 4]], &[vec![1.0; 4]]).unwrap();
        assert!(flat.iter().all(|v| (v - flat[0]).abs() < 1e-12));
    }

    #[test]
    fn exclusion_budget() {
        let ids: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let actual = vec![vec![1.0, 2.0]; 200];
        let mut preds = vec![vec![1.5, 2.5]; 200];
        preds[3][1] = f64::NAN;
        preds[7][0] = f64::INFINITY;
        let r = summarize(&ids, &preds, &actual).unwrap();
        assert_eq!(r.n_excluded(), 2);
        assert_eq!(r.per_series.len(), 198);
        preds[9][0] = f64::NAN;
        assert!(matches!(summarize(&ids, &preds, &actual), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ci_matches_formula() {
        let (m, hw) = ci95(&[17.0, 18.0, 17.5, 17.2, 17.9]).unwrap();
        assert!((m - 17.52).abs() < 1e-12);
        let sd = (0.748f64 / 4.0).sqrt();
        assert!((hw - 1.96 * sd / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(ci95(&[4.0]), Some((4.0, 0.0)));
        assert_eq!(ci95(&[]), None);
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-1e3f64..1e3, n),
                proptest::collection::vec(-1e3f64..1e3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn brute_force_oracle((p, a) in pairs()) {
            let n = p.len() as f64;
            let mut s_abs = 0.0;
            let mut s_sq = 0.0;
            let mut s_sm = 0.0;
            for i in 0..p.len() {
                let r = p[i] - a[i];
                s_abs += r.abs();
                s_sq += r * r;
                let d = p[i].abs() + a[i].abs();
                if d > 0.0 {
                    s_sm += 2.0 * r.abs() / d;
                }
            }
            prop_assert!((mae(&p, &a).unwrap() - s_abs / n).abs() <= 1e-12 * (1.0 + s_abs / n));
            prop_assert!((rmse(&p, &a).unwrap() - (s_sq / n).sqrt()).abs() <= 1e-12 * (1.0 + (s_sq / n).sqrt()));
            prop_assert!((smape(&p, &a).unwrap() - 100.0 * s_sm / n).abs() <= 1e-12 * 100.0);
        }

        #[test]
        fn rmse_bounds_mae((p, a) in pairs()) {
            prop_assert!(rmse(&p, &a).unwrap() >= mae(&p, &a).unwrap() - 1e-12);
            let s = smape(&p, &a).unwrap();
            prop_assert!((0.0..=200.0 + 1e-9).contains(&s));
        }

        #[test]
        fn smape_is_scale_invariant((p, a) in pairs(), c in 1e-3f64..1e3) {
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let as_: Vec<f64> = a.iter().map(|v| v * c).collect();
            prop_assert!((smape(&ps, &as_).unwrap() - smape(&p, &a).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn dataset_mean_ignores_order(rows in proptest::collection::vec(pairs(), 1..8)) {
            let h = rows.iter().map(|r| r.0.len()).min().unwrap();
            let p: Vec<Vec<f64>> = rows.iter().map(|r| r.0[..h].to_vec()).collect();
            let a: Vec<Vec<f64>> = rows.iter().map(|r| r.1[..h].to_vec()).collect();
            let ids: Vec<String> = (0..p.len()).map(|i| i.to_string()).collect();
            let fwd = summarize(&ids, &p, &a).unwrap();
            let rp: Vec<Vec<f64>> = p.iter().rev().cloned().collect();
            let ra: Vec<Vec<f64>> = a.iter().rev().cloned().collect();
            let rev = summarize(&ids, &rp, &ra).unwrap();
            prop_assert!((fwd.smape - rev.smape).abs() < 1e-9);
            prop_assert!((fwd.mae - rev.mae).abs() < 1e-9);
            prop_assert!((fwd.trajectory[h - 1] - fwd.smape).abs() < 1e-9);
        }
    }
}
