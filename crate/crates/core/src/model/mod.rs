//! Baseline and segment-level autoregressive LSTM forecasters.
//!
//! Both models predict the next joint vector `z = y ⊕ x` from the history
//! and share one architecture: a stacked LSTM followed by a head
//! `FC(h) → ReLU → FC(channels)`. The baseline consumes one step at a time
//! plus a constant `ln(scale)` channel. The segment model consumes
//! non-overlapping segments of `d` steps flattened to `d · channels`
//! features.
//!
//! All model entry points expect batches that went through
//! [`scale_batch`](crate::data::scale_batch).

pub mod checkpoint;
pub mod lstm;

use rand::distributions::{Distribution, Uniform};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{inverse_scale, scale_batch, WindowBatch};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::tensor::{Graph, ParameterStore, Tensor, Var};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use lstm::{lstm_forward, LstmLayer, LstmState};

/// Windows per graph in free-running inference.
const INFERENCE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BaseLstm,
    SegLstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BaseLstm => "base-lstm",
            ModelKind::SegLstm => "seg-lstm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base-lstm" | "base_lstm" => Ok(ModelKind::BaseLstm),
            "seg-lstm" | "seg_lstm" => Ok(ModelKind::SegLstm),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the segment model continues past the context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegInference {
    /// Re-encode the shifted `C`-step window from a zero state for every
    /// prediction; the newest segment ends at the latest prediction.
    #[default]
    Rolling,
    /// Keep the recurrent state and feed the stride-1 shifted segment as the
    /// next input.
    Stateful,
}

impl SegInference {
    pub fn as_str(self) -> &'static str {
        match self {
            SegInference::Rolling => "rolling",
            SegInference::Stateful => "stateful",
        }
    }
}

impl std::str::FromStr for SegInference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rolling" => Ok(SegInference::Rolling),
            "stateful" => Ok(SegInference::Stateful),
            _ => Err(Error::Config(format!("unknown segment inference `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    /// `1 + k_active`
    pub channels: usize,
    /// Segment length `d`; 1 for the baseline.
    pub segment: usize,
    /// Ignored by the baseline.
    pub seg_inference: SegInference,
}

impl ModelConfig {
    pub fn base(k_active: usize) -> Self {
        ModelConfig {
            kind: ModelKind::BaseLstm,
            hidden: 40,
            layers: 2,
            dropout: 0.1,
            channels: 1 + k_active,
            segment: 1,
            seg_inference: SegInference::default(),
        }
    }

    pub fn seg(k_active: usize, d: usize) -> Self {
        ModelConfig {
            kind: ModelKind::SegLstm,
            segment: d,
            ..ModelConfig::base(k_active)
        }
    }

    /// Width of one recurrent input vector.
    pub fn input_size(&self) -> usize {
        match self.kind {
            ModelKind::BaseLstm => self.channels + 1,
            ModelKind::SegLstm => self.segment * self.channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.channels == 0 || self.segment == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.kind == ModelKind::BaseLstm && self.segment != 1 {
            return Err(Error::Config("base-lstm has segment length 1".into()));
        }
        Ok(())
    }

    /// Parameters drawn from `U(-1/√h, 1/√h)` (head output layer uses its
    /// own fan-in), with the forget-gate input bias shifted by +1.
    pub fn init_params(&self, seed: u64) -> Result<ParameterStore> {
        self.validate()?;
        let h = self.hidden;
        let mut r = rng::seeded(seed);
        let mut store = ParameterStore::new();
        let uniform = |shape: &[usize], fan: usize, r: &mut rng::Rng| -> Result<Tensor> {
            let bound = 1.0 / (fan as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(r)).collect())
        };
        for l in 0..self.layers {
            let input = if l == 0 { self.input_size() } else { h };
            let [w_ih, w_hh, b_ih, b_hh] = lstm::layer_names(l);
            store.insert(w_ih, uniform(&[4 * h, input], h, &mut r)?)?;
            store.insert(w_hh, uniform(&[4 * h, h], h, &mut r)?)?;
            let mut bias = uniform(&[4 * h], h, &mut r)?;
            for v in &mut bias.data_mut()[h..2 * h] {
                *v += 1.0;
            }
            store.insert(b_ih, bias)?;
            store.insert(b_hh, uniform(&[4 * h], h, &mut r)?)?;
        }
        store.insert("head.w1", uniform(&[h, h], h, &mut r)?)?;
        store.insert("head.b1", uniform(&[h], h, &mut r)?)?;
        store.insert("head.w2", uniform(&[self.channels, h], h, &mut r)?)?;
        store.insert("head.b2", uniform(&[self.channels], h, &mut r)?)?;
        Ok(store)
    }

    fn bind(&self, g: &mut Graph, params: &ParameterStore) -> Result<Bound> {
        let vars = g.params(params);
        let layers = lstm::layers_from(params, &vars, self.layers)?;
        let get = |n: &str| {
            params
                .index_of(n)
                .map(|i| vars[i])
                .ok_or_else(|| Error::Contract(format!("missing parameter {n}")))
        };
        Ok(Bound {
            layers,
            w1: get("head.w1")?,
            b1: get("head.b1")?,
            w2: get("head.w2")?,
            b2: get("head.b2")?,
        })
    }

    fn check_batch(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let scales = batch
            .scales
            .clone()
            .ok_or_else(|| Error::Contract("model input must be scaled first".into()))?;
        if batch.channels() != self.channels {
            return Err(Error::dim("model input", batch.inputs.shape(), &[0, 0, self.channels]));
        }
        Ok(scales)
    }

    /// Number of supervised positions per window under teacher forcing.
    pub fn supervised_steps(&self, steps: usize) -> usize {
        steps / self.segment
    }

    /// Teacher-forced predictions `[B × P × channels]` in scaled space,
    /// with the matching targets and loss mask.
    ///
    /// The baseline predicts after every step (`P = C + H`). The segment
    /// model predicts after every complete segment (`P = ⌊(C + H)/d⌋`), the
    /// target being the value right after the segment's end.
    pub fn teacher_forced<R: RngCore>(
        &self,
        g: &mut Graph,
        params: &ParameterStore,
        batch: &WindowBatch,
        training: bool,
        rng: &mut R,
    ) -> Result<(Var, Tensor, Tensor)> {
        let scales = self.check_batch(batch)?;
        let bound = self.bind(g, params)?;
        let (b, s, ch) = (batch.batch_size(), batch.steps(), batch.channels());
        let d = self.segment;
        let p = self.supervised_steps(s);
        if p == 0 {
            return Err(Error::Argument(format!("window of {s} steps shorter than segment {d}")));
        }
        let log_scale = log_scale_column(&scales);
        let mut states = lstm::zero_state(g, self.layers, b, self.hidden);
        let mut outs = Vec::with_capacity(p);
        for seg in 0..p {
            let x = match self.kind {
                ModelKind::BaseLstm => Tensor::concat(&[&lstm::step_input(&batch.inputs, seg)?, &log_scale], 1)?,
                ModelKind::SegLstm => batch.inputs.slice(1, seg * d..(seg + 1) * d)?.reshape(&[b, d * ch])?,
            };
            let x = g.constant(x);
            outs.push(lstm::step(
                g,
                x,
                &mut states,
                &bound.layers,
                self.hidden,
                self.dropout,
                training,
                rng,
            )?);
        }
        let joined = g.concat(&outs, 1)?;
        let flat = g.reshape(joined, &[b * p, self.hidden])?;
        let y = bound.head(g, flat)?;
        let preds = g.reshape(y, &[b, p, ch])?;
        let (targets, mask) = if d == 1 {
            (batch.targets.clone(), batch.loss_mask.clone())
        } else {
            (
                gather_steps(&batch.targets, d, p)?,
                gather_steps(&batch.loss_mask, d, p)?,
            )
        };
        Ok((preds, targets, mask))
    }

    /// Masked smooth-L1 loss of the teacher-forced predictions and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad<R: RngCore>(
        &self,
        params: &ParameterStore,
        batch: &WindowBatch,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, ParameterStore)> {
        let mut g = Graph::new();
        let (preds, targets, mask) = self.teacher_forced(&mut g, params, batch, training, rng)?;
        let loss = g.smooth_l1(preds, &targets, Some(&mask))?;
        let grads = g.backward(loss, params)?;
        Ok((g.value(loss).item(), grads))
    }

    /// Teacher-forced predictions in the original units.
    pub fn forward(&self, params: &ParameterStore, batch: &WindowBatch) -> Result<Tensor> {
        let scales = self.check_batch(batch)?;
        let mut g = Graph::new();
        let (preds, _, _) = self.teacher_forced(&mut g, params, batch, false, &mut rng::seeded(0))?;
        inverse_scale(g.value(preds), &scales)
    }

    /// Free-running forecast `[B × horizon × channels]` in scaled space.
    ///
    /// The context is consumed teacher-forced; afterwards each prediction
    /// (target and covariates) is fed back as the next input, for exactly
    /// `horizon` predictions. The segment model moves forward one step per
    /// prediction, so its newest input segment always ends at the latest
    /// prediction; see [`SegInference`] for how earlier segments are treated.
    pub fn free_run(&self, params: &ParameterStore, batch: &WindowBatch, horizon: usize) -> Result<Tensor> {
        self.check_batch(batch)?;
        if horizon == 0 {
            return Err(Error::Argument("horizon must be positive".into()));
        }
        if !batch.context.is_multiple_of(self.segment) || batch.context == 0 {
            return Err(Error::Argument(format!(
                "context {} is not a positive multiple of segment {}",
                batch.context, self.segment
            )));
        }
        let b = batch.batch_size();
        let chunks = b.div_ceil(INFERENCE_CHUNK);
        let parts = par::map_range(chunks, |i| {
            let rows = i * INFERENCE_CHUNK..((i + 1) * INFERENCE_CHUNK).min(b);
            let chunk = batch.select(rows)?;
            match (self.kind, self.seg_inference) {
                (ModelKind::SegLstm, SegInference::Rolling) => self.rolling_chunk(params, &chunk, horizon),
                _ => self.free_run_chunk(params, &chunk, horizon),
            }
        });
        let parts: Vec<Tensor> = parts.into_iter().collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat(&refs, 0)
    }

    fn free_run_chunk(&self, params: &ParameterStore, batch: &WindowBatch, horizon: usize) -> Result<Tensor> {
        let scales = self.check_batch(batch)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, params)?;
        let (b, ch, d) = (batch.batch_size(), batch.channels(), self.segment);
        let c = batch.context;
        let mut no_rng = rng::seeded(0);
        let log_scale = g.constant(log_scale_column(&scales));
        let mut states = lstm::zero_state(&mut g, self.layers, b, self.hidden);
        let mut top = None;
        for seg in 0..c / d {
            let x = match self.kind {
                ModelKind::BaseLstm => {
                    let z = g.constant(lstm::step_input(&batch.inputs, seg)?);
                    g.concat(&[z, log_scale], 1)?
                }
                ModelKind::SegLstm => g.constant(batch.inputs.slice(1, seg * d..(seg + 1) * d)?.reshape(&[b, d * ch])?),
            };
            top = Some(lstm::step(
                &mut g,
                x,
                &mut states,
                &bound.layers,
                self.hidden,
                0.0,
                false,
                &mut no_rng,
            )?);
        }
        let first = bound.head(&mut g, top.expect("context has at least one segment"))?;
        let mut recent: Vec<Var> = Vec::with_capacity(d);
        if self.kind == ModelKind::SegLstm {
            for t in c - d..c {
                recent.push(g.constant(lstm::step_input(&batch.inputs, t)?));
            }
        }

        let mut preds = vec![first];
        while preds.len() < horizon {
            let last = *preds.last().unwrap();
            let x = match self.kind {
                ModelKind::BaseLstm => g.concat(&[last, log_scale], 1)?,
                ModelKind::SegLstm => {
                    recent.remove(0);
                    recent.push(last);
                    g.concat(&recent, 1)?
                }
            };
            let top = lstm::step(
                &mut g,
                x,
                &mut states,
                &bound.layers,
                self.hidden,
                0.0,
                false,
                &mut no_rng,
            )?;
            preds.push(bound.head(&mut g, top)?);
        }
        let joined = g.concat(&preds, 1)?;
        g.value(joined).clone().reshape(&[b, horizon, ch])
    }

    fn rolling_chunk(&self, params: &ParameterStore, batch: &WindowBatch, horizon: usize) -> Result<Tensor> {
        let (b, ch, d, c) = (batch.batch_size(), batch.channels(), self.segment, batch.context);
        let mut window: Vec<Tensor> = (0..c)
            .map(|t| lstm::step_input(&batch.inputs, t))
            .collect::<Result<_>>()?;
        let mut no_rng = rng::seeded(0);
        let mut preds = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            // a fresh graph per step keeps memory flat over long horizons
            let mut g = Graph::new();
            let bound = self.bind(&mut g, params)?;
            let mut states = lstm::zero_state(&mut g, self.layers, b, self.hidden);
            let mut top = None;
            for seg in window.chunks(d) {
                let refs: Vec<&Tensor> = seg.iter().collect();
                let x = g.constant(Tensor::concat(&refs, 1)?);
                top = Some(lstm::step(
                    &mut g,
                    x,
                    &mut states,
                    &bound.layers,
                    self.hidden,
                    0.0,
                    false,
                    &mut no_rng,
                )?);
            }
            let y = bound.head(&mut g, top.expect("context has at least one segment"))?;
            let y = g.value(y).clone();
            window.remove(0);
            window.push(y.clone());
            preds.push(y);
        }
        let refs: Vec<&Tensor> = preds.iter().collect();
        Tensor::concat(&refs, 1)?.reshape(&[b, horizon, ch])
    }

    /// Scale raw windows, free-run, and map predictions back to raw units.
    pub fn forecast(&self, params: &ParameterStore, raw: &WindowBatch) -> Result<Tensor> {
        let scaled = scale_batch(raw)?;
        let preds = self.free_run(params, &scaled, raw.horizon)?;
        preds.check_finite("forecast")?;
        inverse_scale(&preds, scaled.scales.as_deref().unwrap_or_default())
    }
}

struct Bound {
    layers: Vec<LstmLayer>,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl Bound {
    fn head(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let a = g.matmul_t(x, self.w1)?;
        let a = g.add(a, self.b1)?;
        let a = g.relu(a);
        let y = g.matmul_t(a, self.w2)?;
        g.add(y, self.b2)
    }
}

fn log_scale_column(scales: &[f64]) -> Tensor {
    Tensor::new(vec![scales.len(), 1], scales.iter().map(|s| s.ln()).collect()).expect("one entry per window")
}

/// Rows `t = (i + 1)·d − 1` for `i < p` of a `[B × S × ch]` tensor.
fn gather_steps(t: &Tensor, d: usize, p: usize) -> Result<Tensor> {
    let parts: Vec<Tensor> = (0..p)
        .map(|i| t.slice(1, (i + 1) * d - 1..(i + 1) * d))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat(&refs, 1)
}

/// Reshape `[B × C × F]` into `[B × C/d × d·F]`.
pub fn segment_reshape(window: &Tensor, d: usize) -> Result<Tensor> {
    let [b, c, f] = window.shape()[..] else {
        return Err(Error::dim("segment_reshape", window.shape(), &[0, 0, 0]));
    };
    if d == 0 || c % d != 0 {
        return Err(Error::Config(format!(
            "length {c} is not divisible by segment length {d}"
        )));
    }
    window.clone().reshape(&[b, c / d, d * f])
}

/// Forecast `horizon` steps for one fully observed context `[C × channels]`
/// given in original units; returns `[horizon × channels]`.
pub fn free_run_forecast(model: &Model, context: &Tensor, horizon: usize) -> Result<Tensor> {
    let [c, ch] = context.shape()[..] else {
        return Err(Error::dim(
            "free_run_forecast",
            context.shape(),
            &[0, model.config.channels],
        ));
    };
    if horizon == 0 {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    let scale = crate::data::window_scale(&context.data().iter().step_by(ch).copied().collect::<Vec<_>>());
    let inputs = context.map(|v| v / scale).reshape(&[1, c, ch])?;
    let batch = WindowBatch {
        input_mask: Tensor::full(&[1, c, ch], 1.0),
        targets: Tensor::zeros(&[1, c, ch]),
        loss_mask: Tensor::zeros(&[1, c, ch]),
        inputs,
        scales: Some(vec![scale]),
        context: c,
        horizon,
        series_index: vec![0],
        starts: vec![0],
    };
    let preds = model.config.free_run(&model.params, &batch, horizon)?;
    preds.map(|v| v * scale).reshape(&[horizon, ch])
}

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        Ok(Model {
            params: config.init_params(seed)?,
            config,
        })
    }

    pub fn forecast(&self, raw: &WindowBatch) -> Result<Tensor> {
        self.config.forecast(&self.params, raw)
    }

    pub fn free_run(&self, batch: &WindowBatch, horizon: usize) -> Result<Tensor> {
        self.config.free_run(&self.params, batch, horizon)
    }

    pub fn forward(&self, batch: &WindowBatch) -> Result<Tensor> {
        self.config.forward(&self.params, batch)
    }
}
