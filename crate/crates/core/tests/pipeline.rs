//! Cross-module checks through the public API.

use covcast_core::data::{
    augment_dataset, evaluation_windows, pcc_sweep, sample_training_batch, scale_batch, AugmentedSeries,
    ForecastDataset, Split,
};
use covcast_core::eval::evaluate;
use covcast_core::experiment::{self, ExperimentSpec, TrainOverrides};
use covcast_core::model::lstm::{layer_names, layers_from, step, step_input, zero_state};
use covcast_core::model::{lstm_forward, read_checkpoint, write_checkpoint, ModelConfig, ModelKind, SegInference};
use covcast_core::rng;
use covcast_core::tensor::{gradient_check, GradCheckConfig, Graph, ParameterStore, Tensor};
use covcast_core::train::{fit, TrainConfig};
use covcast_core::tsf::{parse_tsf, write_tsf, DatasetPolicy, MissingValueAction};

fn lstm_store(input: usize, hidden: usize, layers: usize, seed: u64) -> ParameterStore {
    let full = ModelConfig {
        hidden,
        layers,
        ..ModelConfig::seg(input - 1, 1)
    }
    .init_params(seed)
    .unwrap();
    let mut store = ParameterStore::new();
    for l in 0..layers {
        for name in layer_names(l) {
            store.insert(name.clone(), full.get(&name).unwrap().clone()).unwrap();
        }
    }
    store
}

#[test]
fn lstm_single_step_shape() {
    let store = lstm_store(3, 40, 2, 0);
    let x = Tensor::full(&[1, 1, 3], 0.5);
    let (out, finals) = lstm_forward(&x, &store, 2, 40, 0.1, false, &mut rng::seeded(0)).unwrap();
    assert_eq!(out.shape(), &[1, 1, 40]);
    assert_eq!(finals.len(), 2);
    assert_eq!(finals[1].0.data(), out.data());
}

#[test]
fn recurrent_weight_gradients_match_finite_differences() {
    let (b, s, f, h) = (2, 6, 3, 8);
    let store = lstm_store(f, h, 2, 4);
    let mut r = rng::seeded(1);
    let inputs = Tensor::new(
        vec![b, s, f],
        (0..b * s * f)
            .map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0))
            .collect(),
    )
    .unwrap();
    let target = Tensor::zeros(&[b, s * h]);
    let loss = |p: &ParameterStore| {
        let mut g = Graph::new();
        let vars = g.params(p);
        let stack = layers_from(p, &vars, 2)?;
        let mut states = zero_state(&mut g, 2, b, h);
        let mut outs = Vec::new();
        for t in 0..s {
            let x = g.constant(step_input(&inputs, t)?);
            outs.push(step(
                &mut g,
                x,
                &mut states,
                &stack,
                h,
                0.0,
                false,
                &mut rng::seeded(0),
            )?);
        }
        let all = g.concat(&outs, 1)?;
        let l = g.smooth_l1(all, &target, None)?;
        Ok((g.value(l).item(), g.backward(l, p)?))
    };
    let report = gradient_check(&store, &GradCheckConfig::default(), loss).unwrap();
    let hh: Vec<_> = report.entries.iter().filter(|e| e.label.contains("w_hh")).collect();
    assert!(hh.len() >= 2 * 4 * h * h);
    let worst = hh.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    assert!(worst < 1e-4, "w_hh worst {worst:.2e}");
}

fn sine_dataset(n: usize, len: usize, k: usize, c: usize, h: usize) -> ForecastDataset {
    let series: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..len)
                .map(|t| 3.0 + ((t + s) as f64 * std::f64::consts::PI / 6.0).sin())
                .collect()
        })
        .collect();
    let aug = augment_dataset(&series, k, 0.2, 3, &[]).unwrap();
    ForecastDataset::new((0..n).map(|i| format!("s{i}")).collect(), aug, c, h).unwrap()
}

#[test]
fn segment_supervision_counts() {
    let cfg = ModelConfig::seg(0, 12);
    // two context segments, plus the horizon segment under teacher forcing
    assert_eq!(cfg.supervised_steps(24), 2);
    assert_eq!(cfg.supervised_steps(24 + 12), 3);
    let ds = sine_dataset(2, 96, 0, 24, 12);
    let batch = scale_batch(&sample_training_batch(&ds, 3, &mut rng::seeded(0)).unwrap()).unwrap();
    let mut g = Graph::new();
    let p = cfg.init_params(0).unwrap();
    let (preds, targets, mask) = cfg
        .teacher_forced(&mut g, &p, &batch, false, &mut rng::seeded(0))
        .unwrap();
    assert_eq!(g.value(preds).shape(), &[3, 3, 1]);
    // the segment ending at step t is compared with z_{t+1}; the last one
    // has no successor inside the window
    for (i, end) in [11, 23].into_iter().enumerate() {
        assert_eq!(targets.get(&[0, i, 0]), batch.inputs.get(&[0, end + 1, 0]));
        assert_eq!(mask.get(&[0, i, 0]), 1.0);
    }
    assert_eq!(mask.get(&[0, 2, 0]), 0.0);
}

#[test]
fn pcc_falls_with_noise_on_a_long_series() {
    // one long hourly-like series, 20 noise levels, Spearman rank = -1
    let y: Vec<f64> = (0..26_304)
        .map(|t| 500.0 + 200.0 * (t as f64 * std::f64::consts::PI / 12.0).sin() + (t % 168) as f64)
        .collect();
    let sweep = pcc_sweep(&[y], 1, 5).unwrap();
    assert_eq!(sweep.len(), 20);
    assert!(sweep.windows(2).all(|w| w[1].mean_pcc < w[0].mean_pcc));
    assert!((sweep[0].mean_pcc - 1.0).abs() < 1e-12);
}

#[test]
fn tsf_to_forecast_end_to_end() {
    let mut text =
        String::from("@relation e2e\n@attribute series_name string\n@frequency monthly\n@horizon 6\n@data\n");
    for s in 0..6 {
        let vals: Vec<String> = (0..60)
            .map(|t| (10.0 + s as f64 + ((t + s) as f64 / 2.0).sin()).to_string())
            .collect();
        text.push_str(&format!("S{s}:{}\n", vals.join(",")));
    }
    let policy = DatasetPolicy::new(30, MissingValueAction::RejectSeries);
    let (meta, records) = parse_tsf(text.as_bytes(), &policy).unwrap();
    assert_eq!(
        parse_tsf(write_tsf(&meta, &records).as_bytes(), &policy).unwrap().1,
        records
    );
    let series: Vec<Vec<f64>> = records.iter().map(|r| r.values.clone()).collect();
    let ids: Vec<String> = records.iter().map(|r| r.series_id.clone()).collect();

    let spec = ExperimentSpec {
        k: 2,
        gamma: Some(0.0),
        context: Some(12),
        horizon: Some(6),
        segment: Some(6),
        train: TrainOverrides {
            epochs: Some(3),
            batches_per_epoch: Some(4),
            batch_size: Some(16),
            ..TrainOverrides::default()
        },
        ..ExperimentSpec::new("e2e", ModelKind::SegLstm)
    };
    let resolved = spec.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::run_resolved(&resolved, ids, &series, Some(dir.path())).unwrap();
    assert_eq!(
        out.row.experiment_id,
        "e2e-seg-lstm-cov-2-pearsn-1.0-gamma-0-pl-6-seed-1"
    );
    assert_eq!(out.row.n_series, 6);
    assert_eq!(out.metrics.trajectory.len(), 6);
    let saved = std::fs::read_to_string(dir.path().join(&out.row.experiment_id).join("checkpoint.txt")).unwrap();
    let model = read_checkpoint(&saved).unwrap();
    assert_eq!(model.config.seg_inference, SegInference::Rolling);
    assert_eq!(write_checkpoint(&model), saved);
}

#[test]
fn reloaded_checkpoint_forecasts_identically() {
    let ds = sine_dataset(4, 72, 1, 24, 6);
    let cfg = TrainConfig {
        epochs: 2,
        batches_per_epoch: 3,
        batch_size: 8,
        ..TrainConfig::for_model(ModelKind::BaseLstm, 2)
    };
    let (model, _) = fit(&ModelConfig::base(1), &ds, &cfg).unwrap();
    let back = read_checkpoint(&write_checkpoint(&model)).unwrap();
    let raw = evaluation_windows(&ds, Split::Test).unwrap();
    assert_eq!(model.forecast(&raw).unwrap(), back.forecast(&raw).unwrap());
    assert_eq!(
        evaluate(&model, &ds, Split::Test).unwrap(),
        evaluate(&back, &ds, Split::Test).unwrap()
    );
}

#[test]
fn univariate_series_pass_through_augmentation() {
    let y = vec![1.0, 2.0, 4.0, 8.0];
    let aug = augment_dataset(std::slice::from_ref(&y), 0, 0.0, 0, &[]).unwrap();
    assert_eq!(aug[0], AugmentedSeries::univariate(y));
}
