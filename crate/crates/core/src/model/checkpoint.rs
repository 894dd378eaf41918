//! Plain-text checkpoints with bit-exact parameters.
//!
//! ```text
//! covcast checkpoint v1
//! model kind=seg-lstm hidden=40 layers=2 dropout=0.1 channels=3 segment=4 inference=rolling
//! param lstm.0.w_ih 160,12
//! <one hex-encoded f64 bit pattern per value, space separated>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{ParameterStore, Tensor};

const MAGIC: &str = "covcast checkpoint v1";

pub fn write_checkpoint(model: &Model) -> String {
    let c = &model.config;
    let mut out = format!("{MAGIC}\n");
    let _ = writeln!(
        out,
        "model kind={} hidden={} layers={} dropout={} channels={} segment={} inference={}",
        c.kind,
        c.hidden,
        c.layers,
        c.dropout,
        c.channels,
        c.segment,
        c.seg_inference.as_str()
    );
    for (name, t) in model.params.iter() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "param {name} {}", shape.join(","));
        let bits: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        out.push_str(&bits.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_checkpoint(text: &str) -> Result<Model> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    if lines.next().map(|l| l.1) != Some(MAGIC) {
        return Err(perr(1, "not a checkpoint"));
    }
    let (ln, header) = lines.next().ok_or_else(|| perr(2, "missing model line"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("model") {
        return Err(perr(ln, "expected model line"));
    }
    let mut get = |key: &str| -> Result<&str> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(key)?.strip_prefix('='))
            .ok_or_else(|| perr(ln, format!("expected {key}=")))
    };
    let bad = |k: &str| perr(ln, format!("bad {k}"));
    let config = ModelConfig {
        kind: get("kind")?.parse()?,
        hidden: get("hidden")?.parse().map_err(|_| bad("hidden"))?,
        layers: get("layers")?.parse().map_err(|_| bad("layers"))?,
        dropout: get("dropout")?.parse().map_err(|_| bad("dropout"))?,
        channels: get("channels")?.parse().map_err(|_| bad("channels"))?,
        segment: get("segment")?.parse().map_err(|_| bad("segment"))?,
        seg_inference: get("inference")?.parse()?,
    };
    config.validate()?;

    let mut params = ParameterStore::new();
    loop {
        let (ln, line) = lines.next().ok_or_else(|| perr(0, "missing end marker"))?;
        if line == "end" {
            break;
        }
        let mut parts = line.split_whitespace();
        let (Some("param"), Some(name), Some(shape)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(perr(ln, "expected param line"));
        };
        let shape: Vec<usize> = shape
            .split(',')
            .map(|d| d.parse().map_err(|_| perr(ln, "bad shape")))
            .collect::<Result<_>>()?;
        let (vl, values) = lines.next().ok_or_else(|| perr(ln, "missing values"))?;
        let data: Vec<f64> = values
            .split_whitespace()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(f64::from_bits)
                    .map_err(|_| perr(vl, "bad value"))
            })
            .collect::<Result<_>>()?;
        params.insert(name, Tensor::new(shape, data).map_err(|e| perr(vl, e.to_string()))?)?;
    }
    let expected = config.init_params(0)?;
    if !expected.same_layout(&params) {
        return Err(Error::Contract(
            "checkpoint parameters do not match the model layout".into(),
        ));
    }
    Ok(Model { config, params })
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text)
}
