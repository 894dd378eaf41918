use proptest::prelude::*;

use covcast_core::data::{
    augment_dataset, chronological_split, inverse_scale, pearson_cc, sample_training_batch, scale_batch,
    synthesize_covariates, window_scale, ForecastDataset,
};
use covcast_core::eval::{mae, rmse, smape};
use covcast_core::experiment::results::{parse_results, results_to_string, ResultRow};
use covcast_core::rng;
use covcast_core::train::{EarlyStopping, OneCycle};

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e4f64..1e4, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_is_at_least_one(ctx in series(0..64)) {
        let s = window_scale(&ctx);
        prop_assert!(s >= 1.0);
        let mean_abs = if ctx.is_empty() { 0.0 } else { ctx.iter().map(|v| v.abs()).sum::<f64>() / ctx.len() as f64 };
        prop_assert_eq!(s, mean_abs.max(1.0));
    }

    #[test]
    fn scaling_round_trips(ys in prop::collection::vec(series(40..41), 2..5), seed in any::<u64>()) {
        let aug = augment_dataset(&ys, 1, 0.5, seed, &[]).unwrap();
        let ds = ForecastDataset::new((0..ys.len()).map(|i| i.to_string()).collect(), aug, 8, 4).unwrap();
        let raw = sample_training_batch(&ds, 8, &mut rng::seeded(seed)).unwrap();
        let scaled = scale_batch(&raw).unwrap();
        let back = inverse_scale(&scaled.inputs, scaled.scales.as_deref().unwrap()).unwrap();
        for (a, b) in raw.inputs.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn rmse_bounds_mae(pairs in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..100)) {
        let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (m, r) = (mae(&p, &a).unwrap(), rmse(&p, &a).unwrap());
        prop_assert!(r >= m * (1.0 - 1e-12));
        let s = smape(&p, &a).unwrap();
        prop_assert!((0.0..=200.0 + 1e-9).contains(&s));
    }

    #[test]
    fn smape_is_scale_invariant(pairs in prop::collection::vec((0.1f64..1e3, 0.1f64..1e3), 1..50), c in 1e-3f64..1e3) {
        let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let sp: Vec<f64> = p.iter().map(|v| v * c).collect();
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let (x, y) = (smape(&p, &a).unwrap(), smape(&sp, &sa).unwrap());
        prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
    }

    #[test]
    fn zero_noise_means_perfect_correlation(y in series(12..80), k in 1usize..4, seed in any::<u64>()) {
        let aug = synthesize_covariates(&y, k, 0.0, &mut rng::seeded(seed), &[]).unwrap();
        for (j, c) in aug.covariates.iter().enumerate() {
            prop_assert_eq!(c.lead, j + 1);
            prop_assert_eq!(c.values.len(), y.len() - c.lead);
            if let Some(p) = c.realized_pcc {
                prop_assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..60)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(x), Ok(y)) = (pearson_cc(&a, &b), pearson_cc(&b, &a)) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn splits_partition_the_tail(c in 1usize..40, h in 1usize..30, extra in 0usize..100) {
        let len = c + 3 * h + extra;
        let s = chronological_split(len, c, h).unwrap();
        prop_assert_eq!(s.test_end, len);
        prop_assert_eq!(s.val_end, len - h);
        prop_assert_eq!(s.train_end, len - 2 * h);
    }

    #[test]
    fn one_cycle_stays_in_range(total in 10usize..5000, step in 0usize..5000) {
        let sched = OneCycle::new(total, 1e-3);
        let lr = sched.lr(step.min(total)).unwrap();
        prop_assert!((1e-3 / 1e4 * (1.0 - 1e-12)..=1e-3 * (1.0 + 1e-12)).contains(&lr));
    }

    #[test]
    fn early_stopping_never_fires_while_improving(n in 1usize..200, patience in 1usize..40) {
        let mut es = EarlyStopping::new(patience);
        for e in 0..n {
            prop_assert!(es.observe(e, 100.0 - e as f64));
            prop_assert!(!es.should_stop());
        }
    }

    #[test]
    fn results_rows_round_trip(smape_v in 0.0f64..200.0, mae_v in 0.0f64..1e5, seed in any::<u64>(), pcc in prop::option::of(0.0f64..1.0)) {
        let row = ResultRow {
            experiment_id: "x".into(),
            dataset: "hospital".into(),
            model: "seg-lstm".into(),
            k: usize::from(pcc.is_some()),
            skip_set: String::new(),
            target_pcc: pcc,
            gamma: pcc.map(|p| 1.0 - p),
            mean_pcc: pcc,
            seed,
            context: 36,
            horizon: 12,
            d: 12,
            smape: smape_v,
            mae: mae_v,
            rmse: mae_v * 1.5,
            n_series: 767,
            n_excluded: 0,
            best_epoch: 9,
            train_seconds: 0.25,
            config_hash: "0123456789abcdef".into(),
            code_version: "0.1.0".into(),
        };
        let text = results_to_string(std::slice::from_ref(&row)).unwrap();
        prop_assert_eq!(parse_results(&text).unwrap(), vec![row]);
    }
}
