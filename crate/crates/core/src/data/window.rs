//! Window extraction and mean-absolute scaling.

use rand::Rng;

use crate::data::covariates::AugmentedSeries;
use crate::data::split::{chronological_split, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Series ready for windowing, with per-series splits.
#[derive(Clone, Debug)]
pub struct ForecastDataset {
    pub ids: Vec<String>,
    pub series: Vec<AugmentedSeries>,
    /// `None` for series too short to hold even the test window.
    pub splits: Vec<Option<SplitSpec>>,
    pub context: usize,
    pub horizon: usize,
}

impl ForecastDataset {
    pub fn new(ids: Vec<String>, series: Vec<AugmentedSeries>, context: usize, horizon: usize) -> Result<Self> {
        if ids.len() != series.len() {
            return Err(Error::Argument("ids and series differ in length".into()));
        }
        if let Some(first) = series.first() {
            if series.iter().any(|s| s.k_active() != first.k_active()) {
                return Err(Error::Argument("series disagree on active covariate count".into()));
            }
        }
        let splits = series
            .iter()
            .map(|s| chronological_split(s.len(), context, horizon).ok())
            .collect();
        Ok(ForecastDataset {
            ids,
            series,
            splits,
            context,
            horizon,
        })
    }

    /// Target plus active covariates.
    pub fn channels(&self) -> usize {
        1 + self.series.first().map_or(0, AugmentedSeries::k_active)
    }

    pub fn window_len(&self) -> usize {
        self.context + self.horizon
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// A batch of `C + H` windows over the joint vector `z = y ⊕ x`.
///
/// `targets[b, t]` is `inputs[b, t + 1]`; the final step and any covariate
/// position without ground truth are masked out of the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// `[B, C + H, channels]`
    pub inputs: Tensor,
    /// 1 where the input value is defined.
    pub input_mask: Tensor,
    pub targets: Tensor,
    pub loss_mask: Tensor,
    /// Per-window scale once [`scale_batch`] has run.
    pub scales: Option<Vec<f64>>,
    pub context: usize,
    pub horizon: usize,
    pub series_index: Vec<usize>,
    pub starts: Vec<usize>,
}

impl WindowBatch {
    pub fn batch_size(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// The first `C` steps of the inputs.
    pub fn context_inputs(&self) -> Result<Tensor> {
        self.inputs.slice(1, 0..self.context)
    }

    /// Ground truth and its definedness over the last `H` steps.
    pub fn horizon_truth(&self) -> Result<(Tensor, Tensor)> {
        let r = self.context..self.context + self.horizon;
        Ok((self.inputs.slice(1, r.clone())?, self.input_mask.slice(1, r)?))
    }

    /// Windows `rows` as their own batch.
    pub fn select(&self, rows: std::ops::Range<usize>) -> Result<WindowBatch> {
        Ok(WindowBatch {
            inputs: self.inputs.slice(0, rows.clone())?,
            input_mask: self.input_mask.slice(0, rows.clone())?,
            targets: self.targets.slice(0, rows.clone())?,
            loss_mask: self.loss_mask.slice(0, rows.clone())?,
            scales: self.scales.as_ref().map(|s| s[rows.clone()].to_vec()),
            context: self.context,
            horizon: self.horizon,
            series_index: self.series_index[rows.clone()].to_vec(),
            starts: self.starts[rows].to_vec(),
        })
    }
}

fn build_batch(ds: &ForecastDataset, picks: &[(usize, usize)]) -> Result<WindowBatch> {
    let b = picks.len();
    if b == 0 {
        return Err(Error::Dataset("no windows to build".into()));
    }
    let s = ds.window_len();
    let ch = ds.channels();
    let n = b * s * ch;
    let (mut inputs, mut input_mask) = (vec![0.0; n], vec![0.0; n]);
    let (mut targets, mut loss_mask) = (vec![0.0; n], vec![0.0; n]);
    for (bi, &(si, start)) in picks.iter().enumerate() {
        let series = &ds.series[si];
        for t in 0..s {
            for c in 0..ch {
                let o = (bi * s + t) * ch + c;
                if let Some(v) = series.channel_value(c, start + t) {
                    inputs[o] = v;
                    input_mask[o] = 1.0;
                }
                if t + 1 < s {
                    if let Some(v) = series.channel_value(c, start + t + 1) {
                        targets[o] = v;
                        loss_mask[o] = 1.0;
                    }
                }
            }
        }
    }
    let shape = vec![b, s, ch];
    Ok(WindowBatch {
        inputs: Tensor::new(shape.clone(), inputs)?,
        input_mask: Tensor::new(shape.clone(), input_mask)?,
        targets: Tensor::new(shape.clone(), targets)?,
        loss_mask: Tensor::new(shape, loss_mask)?,
        scales: None,
        context: ds.context,
        horizon: ds.horizon,
        series_index: picks.iter().map(|p| p.0).collect(),
        starts: picks.iter().map(|p| p.1).collect(),
    })
}

/// Uniform sampler over every `(series, offset)` whose full window lies in
/// the training region.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    series: Vec<usize>,
    cumulative: Vec<usize>,
}

impl WindowSampler {
    pub fn new(ds: &ForecastDataset) -> Result<Self> {
        let mut series = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0;
        for (i, split) in ds.splits.iter().enumerate() {
            let n = split.map_or(0, |s| s.training_windows(ds.context, ds.horizon));
            if n > 0 {
                total += n;
                series.push(i);
                cumulative.push(total);
            }
        }
        if total == 0 {
            return Err(Error::Dataset(format!(
                "no series holds a complete training window of {} steps",
                ds.window_len()
            )));
        }
        Ok(WindowSampler { series, cumulative })
    }

    pub fn total_windows(&self) -> usize {
        *self.cumulative.last().expect("non-empty")
    }

    /// Series with at least one training window.
    pub fn eligible_series(&self) -> &[usize] {
        &self.series
    }

    fn locate(&self, u: usize) -> (usize, usize) {
        let pos = self.cumulative.partition_point(|&c| c <= u);
        let before = if pos == 0 { 0 } else { self.cumulative[pos - 1] };
        (self.series[pos], u - before)
    }

    pub fn sample<R: Rng + ?Sized>(&self, ds: &ForecastDataset, batch_size: usize, rng: &mut R) -> Result<WindowBatch> {
        if batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        let total = self.total_windows();
        let picks: Vec<(usize, usize)> = (0..batch_size).map(|_| self.locate(rng.gen_range(0..total))).collect();
        build_batch(ds, &picks)
    }
}

/// Draw a training batch (with replacement).
pub fn sample_training_batch<R: Rng + ?Sized>(
    ds: &ForecastDataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<WindowBatch> {
    WindowSampler::new(ds)?.sample(ds, batch_size, rng)
}

/// One window per eligible series, ending at the split's final index.
pub fn evaluation_windows(ds: &ForecastDataset, split: Split) -> Result<WindowBatch> {
    let picks: Vec<(usize, usize)> = ds
        .splits
        .iter()
        .enumerate()
        .filter_map(|(i, s)| Some((i, s.as_ref()?.eval_window_start(split, ds.context, ds.horizon)?)))
        .collect();
    if picks.is_empty() {
        return Err(Error::Dataset(format!("no series long enough for a {split:?} window")));
    }
    build_batch(ds, &picks)
}

/// `max(mean |z| over the context, 1)`.
pub fn window_scale(context_target: &[f64]) -> f64 {
    if context_target.is_empty() {
        return 1.0;
    }
    let mean_abs = context_target.iter().map(|v| v.abs()).sum::<f64>() / context_target.len() as f64;
    mean_abs.max(1.0)
}

/// Divide every channel of each window by the scale of its context target.
pub fn scale_batch(batch: &WindowBatch) -> Result<WindowBatch> {
    if batch.scales.is_some() {
        return Err(Error::Contract("batch is already scaled".into()));
    }
    let (b, s, ch) = (batch.batch_size(), batch.steps(), batch.channels());
    let c = batch.context;
    let scales: Vec<f64> = (0..b)
        .map(|bi| {
            let ctx: Vec<f64> = (0..c).map(|t| batch.inputs.data()[(bi * s + t) * ch]).collect();
            window_scale(&ctx)
        })
        .collect();
    let per_window = s * ch;
    let divide = |t: &Tensor| -> Result<Tensor> {
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v / scales[i / per_window])
            .collect();
        Tensor::new(t.shape().to_vec(), data)
    };
    Ok(WindowBatch {
        inputs: divide(&batch.inputs)?,
        targets: divide(&batch.targets)?,
        scales: Some(scales.clone()),
        ..batch.clone()
    })
}

/// Multiply each window's values (leading axis) by its scale.
pub fn inverse_scale(preds: &Tensor, scales: &[f64]) -> Result<Tensor> {
    if preds.shape()[0] != scales.len() {
        return Err(Error::dim("inverse_scale", preds.shape(), &[scales.len()]));
    }
    let per = preds.len() / scales.len();
    let data = preds
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v * scales[i / per])
        .collect();
    Tensor::new(preds.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::covariates::synthesize_covariates;
    use crate::rng;
    use proptest::prelude::*;

    fn ramp_dataset(len: usize, n: usize, k: usize, c: usize, h: usize) -> ForecastDataset {
        let series: Vec<AugmentedSeries> = (0..n)
            .map(|s| {
                let y: Vec<f64> = (0..len).map(|t| (t + 100 * s) as f64).collect();
                if k == 0 {
                    AugmentedSeries::univariate(y)
                } else {
                    synthesize_covariates(&y, k, 0.0, &mut rng::seeded(0), &[]).unwrap()
                }
            })
            .collect();
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        ForecastDataset::new(ids, series, c, h).unwrap()
    }

    #[test]
    fn batch_shape_and_shift() {
        let ds = ramp_dataset(60, 3, 2, 6, 4);
        let batch = sample_training_batch(&ds, 128, &mut rng::seeded(5)).unwrap();
        assert_eq!(batch.inputs.shape(), &[128, 10, 3]);
        for b in 0..128 {
            for t in 0..9 {
                for c in 0..3 {
                    assert_eq!(batch.targets.get(&[b, t, c]), batch.inputs.get(&[b, t + 1, c]));
                }
            }
            assert_eq!(batch.loss_mask.get(&[b, 9, 0]), 0.0);
        }
    }

    #[test]
    fn seeded_batches_repeat() {
        let ds = ramp_dataset(60, 3, 1, 6, 4);
        let a = sample_training_batch(&ds, 16, &mut rng::seeded(9)).unwrap();
        let b = sample_training_batch(&ds, 16, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_windows_stay_inside_region() {
        let ds = ramp_dataset(50, 4, 0, 8, 5);
        let sampler = WindowSampler::new(&ds).unwrap();
        let batch = sampler.sample(&ds, 500, &mut rng::seeded(1)).unwrap();
        for (&start, &si) in batch.starts.iter().zip(&batch.series_index) {
            let split = ds.splits[si].unwrap();
            assert!(start + ds.window_len() <= split.train_end);
            assert!(split.train_end <= 50 - 2 * 5);
        }
        // every valid offset is reachable: 4 series × (40 − 13 + 1)
        assert_eq!(sampler.total_windows(), 4 * 28);
    }

    #[test]
    fn evaluation_windows_end_at_split() {
        let ds = ramp_dataset(40, 3, 0, 6, 4);
        let test = evaluation_windows(&ds, Split::Test).unwrap();
        assert_eq!(test.batch_size(), 3);
        assert_eq!(test.starts, vec![30, 30, 30]);
        let (truth, _) = test.horizon_truth().unwrap();
        assert_eq!(truth.data()[..4], [36.0, 37.0, 38.0, 39.0]);
        let val = evaluation_windows(&ds, Split::Validation).unwrap();
        assert_eq!(val.starts[0], 26);
    }

    #[test]
    fn undefined_covariates_are_masked() {
        // lead-2 covariate has no truth for the last two steps
        let ds = ramp_dataset(30, 1, 2, 6, 4);
        let test = evaluation_windows(&ds, Split::Test).unwrap();
        let (_, mask) = test.horizon_truth().unwrap();
        assert_eq!(mask.get(&[0, 3, 0]), 1.0);
        assert_eq!(mask.get(&[0, 3, 1]), 0.0);
        assert_eq!(mask.get(&[0, 3, 2]), 0.0);
        assert_eq!(mask.get(&[0, 1, 2]), 1.0);
    }

    #[test]
    fn no_training_windows_is_an_error() {
        // C + 3H - 1 values
        let ds = ramp_dataset(17, 2, 0, 6, 4);
        assert!(matches!(WindowSampler::new(&ds), Err(Error::Dataset(_))));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(window_scale(&[0.0; 5]), 1.0);
        assert_eq!(window_scale(&[5.0; 5]), 5.0);
        assert_eq!(window_scale(&[-0.2, 0.4]), 1.0);
    }

    #[test]
    fn zero_context_batch_unchanged() {
        let series = vec![AugmentedSeries::univariate(vec![0.0; 30])];
        let ds = ForecastDataset::new(vec!["z".into()], series, 6, 4).unwrap();
        let batch = evaluation_windows(&ds, Split::Test).unwrap();
        let scaled = scale_batch(&batch).unwrap();
        assert_eq!(scaled.scales.as_deref(), Some(&[1.0][..]));
        assert_eq!(scaled.inputs, batch.inputs);
        assert!(scale_batch(&scaled).is_err());
    }

    proptest! {
        #[test]
        fn scale_roundtrip(vals in prop::collection::vec(-1e4f64..1e4, 40), c in 1usize..20) {
            let series = vec![AugmentedSeries::univariate(vals.clone())];
            let ds = ForecastDataset::new(vec!["a".into()], series, c, 5).unwrap();
            let batch = evaluation_windows(&ds, Split::Test).unwrap();
            let scaled = scale_batch(&batch).unwrap();
            let scales = scaled.scales.clone().unwrap();
            prop_assert!(scales.iter().all(|&s| s >= 1.0));
            let back = inverse_scale(&scaled.inputs, &scales).unwrap();
            for (x, y) in back.data().iter().zip(batch.inputs.data()) {
                prop_assert!((x - y).abs() < 1e-12 * y.abs().max(1.0));
            }
            for (x, y) in scaled.inputs.data().iter().zip(batch.inputs.data()) {
                prop_assert!(x.signum() == y.signum() || *y == 0.0);
            }
        }
    }
}
