//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::tensor::ParameterStore;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Check a random subset of this many parameters; `None` checks all.
    pub sample: Option<usize>,
    pub seed: u64,
    /// Denominator floor for the relative error, so gradients that are zero
    /// on both sides do not divide by zero.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            sample: None,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub flat_index: usize,
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub worst: Option<String>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.entries.len()
    }
}

/// Compare `f`'s analytic gradient against `(f(θ+h) − f(θ−h)) / 2h`.
///
/// `f` must be deterministic: any dropout inside it has to draw from a
/// generator it reseeds on every call.
pub fn gradient_check<F>(store: &ParameterStore, cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParameterStore) -> Result<(f64, ParameterStore)> + Sync,
{
    let (_, analytic) = f(store)?;
    if !analytic.same_layout(store) {
        return Err(Error::Contract("gradient layout differs from parameters".into()));
    }
    if let Some(name) = analytic.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }

    let total = store.num_scalars();
    let mut indices: Vec<usize> = match cfg.sample {
        Some(n) if n < total => {
            let mut r = rng::seeded(cfg.seed);
            sample(&mut r, total, n).into_vec()
        }
        _ => (0..total).collect(),
    };
    indices.sort_unstable();

    let results = par::map(&indices, |&i| -> Result<GradCheckEntry> {
        let theta = store.flat_get(i);
        let mut probe = store.clone();
        probe.flat_set(i, theta + cfg.step);
        let (plus, _) = f(&probe)?;
        probe.flat_set(i, theta - cfg.step);
        let (minus, _) = f(&probe)?;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic.flat_get(i);
        if !numeric.is_finite() {
            return Err(Error::NonFinite(format!("numeric gradient of {}", store.flat_label(i))));
        }
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
        Ok(GradCheckEntry {
            flat_index: i,
            label: store.flat_label(i),
            analytic: a,
            numeric,
            rel_error,
        })
    });
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;

    let worst = entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error));
    let max_rel_error = worst.map_or(0.0, |e| e.rel_error);
    Ok(GradCheckReport {
        worst: worst.map(|e| e.label.clone()),
        max_rel_error,
        passed: max_rel_error < cfg.tolerance,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    fn square_loss(store: &ParameterStore) -> Result<(f64, ParameterStore)> {
        let mut g = Graph::new();
        let th = g.param(store, 0);
        let sq = g.mul(th, th)?;
        let target = Tensor::zeros(&[1]);
        // smooth_l1 of θ² against 0 is θ² − 0.5 once θ² ≥ 1
        let loss = g.smooth_l1(sq, &target, None)?;
        let grads = g.backward(loss, store)?;
        Ok((g.value(loss).item(), grads))
    }

    #[test]
    fn polynomial_matches() {
        let mut store = ParameterStore::new();
        store.insert("theta", Tensor::from_vec(vec![3.0])).unwrap();
        let report = gradient_check(&store, &GradCheckConfig::default(), square_loss).unwrap();
        let e = &report.entries[0];
        assert_eq!(e.analytic, 6.0);
        assert!((e.numeric - 6.0).abs() < 1e-8, "{}", e.numeric);
        assert!(report.passed);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut store = ParameterStore::new();
        store.insert("theta", Tensor::from_vec(vec![3.0])).unwrap();
        let wrong = |s: &ParameterStore| {
            let (l, mut g) = square_loss(s)?;
            g.flat_set(0, g.flat_get(0) * 1.01);
            Ok((l, g))
        };
        let report = gradient_check(&store, &GradCheckConfig::default(), wrong).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst.as_deref(), Some("theta[0]"));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::from_vec(vec![1.0])).unwrap();
        let bad = |s: &ParameterStore| {
            let mut g = s.zeros_like();
            g.flat_set(0, f64::NAN);
            Ok((0.0, g))
        };
        let err = gradient_check(&store, &GradCheckConfig::default(), bad).unwrap_err();
        assert!(err.to_string().contains('w'));
    }
}
