//! Teacher-forced training with AdamW and a one-cycle schedule,
//! free-running validation and early stopping.

mod optim;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use optim::{AdamW, OneCycle};

use crate::data::{evaluation_windows, scale_batch, ForecastDataset, Split, WindowSampler};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::rng;
use crate::tensor::{smooth_l1, ParameterStore};

/// Stream of the training seed used for window sampling and dropout, kept
/// clear of the per-series covariate streams.
const SAMPLING_STREAM: u64 = 1 << 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 128,
            batches_per_epoch: 200,
            weight_decay: 1e-8,
            dropout: 0.1,
            patience: 30,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults for `kind`: 200 batches per epoch for the baseline and 500
    /// for the segment model.
    pub fn for_model(kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            batches_per_epoch: match kind {
                ModelKind::BaseLstm => 200,
                ModelKind::SegLstm => 500,
            },
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.batches_per_epoch == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch size, batches per epoch and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Counts epochs since the last strict improvement of the monitored loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Record an epoch; returns whether it improved on the best so far.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based; 0 if no epoch finished.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Reason the run was aborted, if it was.
    pub failure: Option<String>,
    pub seconds: f64,
}

impl FitReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// The report without wall-clock fields, for determinism comparisons.
    pub fn without_timing(&self) -> FitReport {
        let mut r = self.clone();
        r.seconds = 0.0;
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }
}

/// Free-running SmoothL1 loss over the validation windows, in scaled space.
///
/// Each eligible series contributes one window; the loss averages every
/// horizon step and channel with defined ground truth.
pub fn validate(config: &ModelConfig, params: &ParameterStore, ds: &ForecastDataset) -> Result<f64> {
    free_running_loss(config, params, ds, Split::Validation)
}

pub fn free_running_loss(
    config: &ModelConfig,
    params: &ParameterStore,
    ds: &ForecastDataset,
    split: Split,
) -> Result<f64> {
    let batch = scale_batch(&evaluation_windows(ds, split)?)?;
    let preds = config.free_run(params, &batch, ds.horizon)?;
    let (truth, mask) = batch.horizon_truth()?;
    smooth_l1(&preds, &truth, Some(&mask))
}

/// Train a freshly initialised model on the training region of `ds`.
///
/// Returns the parameters of the epoch with the lowest validation loss.
/// Non-finite gradients or validation losses abort the run; the report then
/// carries the reason and the best parameters seen so far are returned.
pub fn fit(model: &ModelConfig, ds: &ForecastDataset, cfg: &TrainConfig) -> Result<(Model, FitReport)> {
    cfg.validate()?;
    let config = ModelConfig {
        dropout: cfg.dropout,
        ..*model
    };
    config.validate()?;
    if ds.channels() != config.channels {
        return Err(Error::Config(format!(
            "dataset has {} channels but the model expects {}",
            ds.channels(),
            config.channels
        )));
    }
    let start = Instant::now();
    let sampler = WindowSampler::new(ds)?;
    let mut params = config.init_params(cfg.seed)?;
    let mut best = params.clone();
    let mut opt = AdamW::new(&params);
    let sched = OneCycle::new(cfg.epochs * cfg.batches_per_epoch, cfg.learning_rate);
    let mut r = rng::stream(cfg.seed, SAMPLING_STREAM);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut report = FitReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        failure: None,
        seconds: 0.0,
    };
    let mut step = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut total = 0.0;
        let mut lr = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            let batch = scale_batch(&sampler.sample(ds, cfg.batch_size, &mut r)?)?;
            let (loss, grads) = config.loss_and_grad(&params, &batch, true, &mut r)?;
            lr = sched.lr(step)?;
            if let Err(e) = opt.step(&mut params, &grads, lr, cfg.weight_decay) {
                report.failure = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
            total += loss;
            step += 1;
        }
        let train_loss = total / cfg.batches_per_epoch as f64;
        let val_loss = validate(&config, &params, ds)?;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr:.3e}");
        if !val_loss.is_finite() {
            report.failure = Some(format!("epoch {epoch}: validation loss is {val_loss}"));
            break;
        }
        if stopper.observe(epoch, val_loss) {
            best = params.clone();
        }
        if stopper.should_stop() {
            report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    report.best_epoch = stopper.best_epoch;
    report.best_val_loss = stopper.best;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((Model { config, params: best }, report))
}

/// Mean teacher-forced training loss of `params` on a fixed batch; handy for
/// smoke checks.
pub fn batch_loss(config: &ModelConfig, params: &ParameterStore, batch: &crate::data::WindowBatch) -> Result<f64> {
    let mut g = crate::tensor::Graph::new();
    let (preds, targets, mask) = config.teacher_forced(&mut g, params, batch, false, &mut rng::seeded(0))?;
    let loss = g.smooth_l1(preds, &targets, Some(&mask))?;
    Ok(g.value(loss).item())
}

/// Take `steps` AdamW steps at a fixed learning rate on one batch,
/// returning the loss before each step.
pub fn fixed_batch_losses(
    config: &ModelConfig,
    params: &mut ParameterStore,
    batch: &crate::data::WindowBatch,
    lr: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut opt = AdamW::new(params);
    let mut r = rng::seeded(0);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, grads) = config.loss_and_grad(params, batch, false, &mut r)?;
        out.push(loss);
        opt.step(params, &grads, lr, 0.0)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_covariates, AugmentedSeries};
    use crate::tensor::smooth_l1_term;

    fn sine_dataset(n: usize, len: usize, k: usize, c: usize, h: usize) -> ForecastDataset {
        let series: Vec<AugmentedSeries> = (0..n)
            .map(|s| {
                let y: Vec<f64> = (0..len)
                    .map(|t| 10.0 + 4.0 * (2.0 * std::f64::consts::PI * (t + s) as f64 / 12.0).sin())
                    .collect();
                if k == 0 {
                    AugmentedSeries::univariate(y)
                } else {
                    synthesize_covariates(&y, k, 0.2, &mut rng::stream(3, s as u64), &[]).unwrap()
                }
            })
            .collect();
        ForecastDataset::new((0..n).map(|i| format!("s{i}")).collect(), series, c, h).unwrap()
    }

    fn tiny(kind: ModelKind, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            batches_per_epoch: 4,
            ..TrainConfig::for_model(kind, seed)
        }
    }

    #[test]
    fn defaults_match_table() {
        let c = TrainConfig::for_model(ModelKind::SegLstm, 1);
        assert_eq!(
            (c.epochs, c.batch_size, c.batches_per_epoch, c.patience),
            (100, 128, 500, 30)
        );
        assert_eq!((c.learning_rate, c.weight_decay, c.dropout), (1e-3, 1e-8, 0.1));
        assert_eq!(TrainConfig::for_model(ModelKind::BaseLstm, 1).batches_per_epoch, 200);
        assert!(TrainConfig { epochs: 0, ..c }.validate().is_err());
    }

    #[test]
    fn constant_loss_stops_after_patience_plus_one() {
        let mut s = EarlyStopping::new(30);
        let mut epochs = 0;
        for e in 1..=100 {
            s.observe(e, 0.5);
            epochs = e;
            if s.should_stop() {
                break;
            }
        }
        assert_eq!(epochs, 31);
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn improving_loss_never_stops() {
        let mut s = EarlyStopping::new(30);
        for e in 1..=100 {
            s.observe(e, 1.0 / e as f64);
            assert!(!s.should_stop());
        }
        assert_eq!(s.best_epoch, 100);
    }

    #[test]
    fn validate_matches_brute_force() {
        let ds = sine_dataset(4, 60, 2, 12, 6);
        let cfg = ModelConfig::base(2);
        let p = cfg.init_params(4).unwrap();
        let got = validate(&cfg, &p, &ds).unwrap();
        let batch = scale_batch(&evaluation_windows(&ds, Split::Validation).unwrap()).unwrap();
        let preds = cfg.free_run(&p, &batch, 6).unwrap();
        let (mut sum, mut n) = (0.0, 0);
        for b in 0..4 {
            for t in 0..6 {
                for c in 0..3 {
                    if batch.input_mask.get(&[b, 12 + t, c]) == 1.0 {
                        sum += smooth_l1_term(preds.get(&[b, t, c]) - batch.inputs.get(&[b, 12 + t, c]));
                        n += 1;
                    }
                }
            }
        }
        assert!((got - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn validation_ignores_series_order() {
        let ds = sine_dataset(4, 60, 1, 12, 6);
        let mut rev = ds.clone();
        rev.ids.reverse();
        rev.series.reverse();
        rev.splits.reverse();
        let cfg = ModelConfig::seg(1, 4);
        let p = cfg.init_params(1).unwrap();
        let (a, b) = (validate(&cfg, &p, &ds).unwrap(), validate(&cfg, &p, &rev).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = sine_dataset(3, 60, 1, 12, 6);
        for cfg in [ModelConfig::base(1), ModelConfig::seg(1, 4)] {
            let tc = tiny(cfg.kind, 9);
            let (m1, r1) = fit(&cfg, &ds, &tc).unwrap();
            let (m2, r2) = fit(&cfg, &ds, &tc).unwrap();
            assert_eq!(r1.without_timing(), r2.without_timing());
            let (a, b) = (m1.params.to_flat(), m2.params.to_flat());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(r1.epochs.len(), 3);
            let best = r1.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
            assert_eq!(r1.best_val_loss, best);
            assert_eq!(r1.epochs[r1.best_epoch - 1].val_loss, best);
        }
    }

    #[test]
    fn returned_parameters_are_from_best_epoch() {
        let ds = sine_dataset(3, 60, 0, 12, 6);
        let cfg = ModelConfig::base(0);
        let (m, r) = fit(&cfg, &ds, &tiny(cfg.kind, 2)).unwrap();
        assert!((validate(&m.config, &m.params, &ds).unwrap() - r.best_val_loss).abs() < 1e-12);
    }

    #[test]
    fn fixed_batch_loss_decreases() {
        let ds = sine_dataset(3, 60, 2, 12, 6);
        let batch = scale_batch(&crate::data::sample_training_batch(&ds, 16, &mut rng::seeded(0)).unwrap()).unwrap();
        for cfg in [ModelConfig::base(2), ModelConfig::seg(2, 6)] {
            let mut p = cfg.init_params(0).unwrap();
            let losses = fixed_batch_losses(&cfg, &mut p, &batch, 1e-3, 6).unwrap();
            assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        }
    }

    #[test]
    fn report_csv_columns() {
        let ds = sine_dataset(2, 60, 0, 12, 6);
        let cfg = ModelConfig::base(0);
        let (_, r) = fit(
            &cfg,
            &ds,
            &TrainConfig {
                epochs: 2,
                ..tiny(cfg.kind, 1)
            },
        )
        .unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,lr,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("2,"));
    }
}
