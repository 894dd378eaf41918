//! Monash `.tsf` ingestion and per-dataset experimental constants.
//!
//! Grammar: `#` comment lines; `@relation`, `@attribute <name> <type>`,
//! `@frequency`, `@horizon`, `@missing`, `@equallength` header lines; one
//! `@data` line; then one series per line with `:`-separated attribute
//! fields followed by a comma-separated list of reals (or `?`).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H-%M-%S";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Quarterly,
    Yearly,
}

impl Frequency {
    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Hourly => "hourly",
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
            Frequency::Yearly => "yearly",
        }
    }

    /// Horizon the Monash archive uses when a file carries no `@horizon`.
    pub fn default_horizon(self) -> usize {
        match self {
            Frequency::Yearly => 6,
            Frequency::Quarterly => 8,
            Frequency::Monthly => 18,
            Frequency::Weekly => 13,
            Frequency::Daily => 30,
            Frequency::Hourly => 48,
        }
    }

    /// Monash lag-based lookback window (1.25 × seasonal lag, rounded up).
    pub fn default_context(self) -> usize {
        match self {
            Frequency::Yearly => 2,
            Frequency::Quarterly => 5,
            Frequency::Monthly => 15,
            Frequency::Weekly => 65,
            Frequency::Daily => 9,
            Frequency::Hourly => 210,
        }
    }

    /// Segment length used by the segment model.
    pub fn default_seasonality(self) -> usize {
        match self {
            Frequency::Yearly => 1,
            Frequency::Quarterly => 4,
            Frequency::Monthly => 12,
            Frequency::Weekly => 8,
            Frequency::Daily => 7,
            Frequency::Hourly => 24,
        }
    }
}

impl FromStr for Frequency {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "hourly" => Frequency::Hourly,
            "daily" => Frequency::Daily,
            "weekly" => Frequency::Weekly,
            "monthly" => Frequency::Monthly,
            "quarterly" => Frequency::Quarterly,
            "yearly" => Frequency::Yearly,
            other => return Err(format!("unsupported frequency {other:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeKind {
    String,
    Date,
    Numeric,
}

impl AttributeKind {
    fn as_str(self) -> &'static str {
        match self {
            AttributeKind::String => "string",
            AttributeKind::Date => "date",
            AttributeKind::Numeric => "numeric",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRecord {
    pub series_id: String,
    pub start_time: Option<NaiveDateTime>,
    /// Raw attribute fields in header order.
    pub fields: Vec<String>,
    pub values: Vec<f64>,
}

impl TimeSeriesRecord {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    pub frequency: Option<Frequency>,
    pub series_count: usize,
    pub horizon: usize,
    pub context_length: usize,
    pub seasonality: usize,
    pub attributes: Vec<(String, AttributeKind)>,
    pub missing: Option<bool>,
    pub equal_length: Option<bool>,
    /// Series dropped by the ingestion policy.
    pub rejected_series: usize,
}

impl DatasetMeta {
    /// Overwrite horizon/context/seasonality with experiment constants.
    pub fn apply(&mut self, c: &DatasetConstants) {
        self.horizon = c.horizon;
        self.context_length = c.base_context;
        self.seasonality = c.seasonality;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingValueAction {
    RejectSeries,
    RejectFile,
}

/// How ingestion treats short series and missing markers. Always explicit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetPolicy {
    /// Series with fewer values are dropped (counted in `rejected_series`).
    pub min_length: usize,
    pub missing_value_action: MissingValueAction,
}

impl DatasetPolicy {
    pub fn new(min_length: usize, missing_value_action: MissingValueAction) -> Self {
        DatasetPolicy {
            min_length,
            missing_value_action,
        }
    }
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_bool(line: usize, s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(perr(line, format!("expected true/false, got {other:?}"))),
    }
}

pub fn read_tsf_file(path: &Path, policy: &DatasetPolicy) -> Result<(DatasetMeta, Vec<TimeSeriesRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tsf(BufReader::new(file), policy)
}

/// Parse a `.tsf` document.
pub fn parse_tsf<R: Read>(stream: R, policy: &DatasetPolicy) -> Result<(DatasetMeta, Vec<TimeSeriesRecord>)> {
    let reader = BufReader::new(stream);
    let mut name = None;
    let mut attributes: Vec<(String, AttributeKind)> = Vec::new();
    let mut frequency = None;
    let mut horizon = None;
    let mut missing = None;
    let mut equal_length = None;
    let mut in_data = false;
    let mut records = Vec::new();
    let mut rejected = 0;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| perr(lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            match (keyword.to_ascii_lowercase().as_str(), rest.as_slice()) {
                ("@relation", [n]) => name = Some(n.to_string()),
                ("@attribute", [n, kind]) => {
                    let kind = match *kind {
                        "string" => AttributeKind::String,
                        "date" => AttributeKind::Date,
                        "numeric" => AttributeKind::Numeric,
                        other => return Err(perr(lineno, format!("unknown attribute type {other:?}"))),
                    };
                    attributes.push((n.to_string(), kind));
                }
                ("@frequency", [f]) => frequency = Some(f.parse::<Frequency>().map_err(|e| perr(lineno, e))?),
                ("@horizon", [h]) => {
                    let h: usize = h.parse().map_err(|_| perr(lineno, format!("bad horizon {h:?}")))?;
                    if h == 0 {
                        return Err(perr(lineno, "horizon must be positive"));
                    }
                    horizon = Some(h);
                }
                ("@missing", [b]) => missing = Some(parse_bool(lineno, b)?),
                ("@equallength", [b]) => equal_length = Some(parse_bool(lineno, b)?),
                ("@data", []) => in_data = true,
                _ => return Err(perr(lineno, format!("malformed header line {line:?}"))),
            }
            continue;
        }

        let fields: Vec<&str> = line.split(':').collect();
        if fields.len() != attributes.len() + 1 {
            return Err(perr(
                lineno,
                format!("expected {} fields, found {}", attributes.len() + 1, fields.len()),
            ));
        }
        let (attr_fields, data) = fields.split_at(attributes.len());
        let data = data[0].trim();
        if data.is_empty() {
            return Err(perr(lineno, "series has no values"));
        }
        let mut values = Vec::new();
        let mut has_missing = false;
        for tok in data.split(',') {
            let tok = tok.trim();
            if tok == "?" {
                has_missing = true;
                continue;
            }
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| perr(lineno, format!("bad value {tok:?}")))?,
            );
        }

        let mut series_id = None;
        let mut start_time = None;
        for ((_, kind), raw) in attributes.iter().zip(attr_fields) {
            match kind {
                AttributeKind::String if series_id.is_none() => series_id = Some(raw.to_string()),
                AttributeKind::Date if start_time.is_none() => {
                    start_time = Some(
                        NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT)
                            .map_err(|e| perr(lineno, format!("bad timestamp {raw:?}: {e}")))?,
                    );
                }
                AttributeKind::Numeric => {
                    raw.parse::<f64>()
                        .map_err(|_| perr(lineno, format!("bad numeric attribute {raw:?}")))?;
                }
                _ => {}
            }
        }
        let series_id = series_id.unwrap_or_else(|| format!("T{}", records.len() + rejected + 1));

        if has_missing {
            match policy.missing_value_action {
                MissingValueAction::RejectFile => {
                    return Err(Error::Dataset(format!(
                        "line {lineno}: series {series_id} contains missing values"
                    )))
                }
                MissingValueAction::RejectSeries => {
                    rejected += 1;
                    continue;
                }
            }
        }
        if values.len() < policy.min_length {
            rejected += 1;
            continue;
        }
        records.push(TimeSeriesRecord {
            series_id,
            start_time,
            fields: attr_fields.iter().map(|s| s.to_string()).collect(),
            values,
        });
    }

    if !in_data {
        return Err(perr(0, "no @data section"));
    }
    let name = name.unwrap_or_else(|| "unnamed".to_string());
    let meta = DatasetMeta {
        series_count: records.len(),
        horizon: horizon.or(frequency.map(Frequency::default_horizon)).unwrap_or(1),
        context_length: frequency.map_or(1, Frequency::default_context),
        seasonality: frequency.map_or(1, Frequency::default_seasonality),
        name,
        frequency,
        attributes,
        missing,
        equal_length,
        rejected_series: rejected,
    };
    Ok((meta, records))
}

/// Serialize back to `.tsf` text. Values use Rust's shortest round-trip
/// formatting, so re-parsing yields identical floats.
pub fn write_tsf(meta: &DatasetMeta, records: &[TimeSeriesRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", meta.name);
    for (n, k) in &meta.attributes {
        let _ = writeln!(out, "@attribute {n} {}", k.as_str());
    }
    if let Some(f) = meta.frequency {
        let _ = writeln!(out, "@frequency {}", f.as_str());
    }
    let _ = writeln!(out, "@horizon {}", meta.horizon);
    if let Some(m) = meta.missing {
        let _ = writeln!(out, "@missing {m}");
    }
    if let Some(e) = meta.equal_length {
        let _ = writeln!(out, "@equallength {e}");
    }
    out.push_str("@data\n");
    for r in records {
        for f in &r.fields {
            out.push_str(f);
            out.push(':');
        }
        let vals: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

/// Horizon, segment length and context constants for one benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConstants {
    pub horizon: usize,
    pub seasonality: usize,
    /// Segment-model context is this multiple of the horizon.
    pub seg_context_multiplier: usize,
    /// Context length for the baseline model.
    pub base_context: usize,
}

impl DatasetConstants {
    pub fn seg_context(&self) -> usize {
        self.horizon * self.seg_context_multiplier
    }
}

/// Canonical Monash file name for a benchmark dataset.
pub fn dataset_file_name(name: &str) -> Option<&'static str> {
    Some(match name.to_ascii_lowercase().as_str() {
        "hospital" => "hospital_dataset.tsf",
        "tourism" => "tourism_monthly_dataset.tsf",
        "traffic" => "traffic_weekly_dataset.tsf",
        "electricity" => "electricity_hourly_dataset.tsf",
        _ => return None,
    })
}

/// Constants for the four benchmark datasets.
pub fn dataset_defaults(name: &str) -> Result<DatasetConstants> {
    let (horizon, seasonality, seg_context_multiplier, base_context) = match name.to_ascii_lowercase().as_str() {
        "hospital" => (12, 12, 3, 15),
        "tourism" => (24, 12, 3, 15),
        "traffic" => (8, 8, 8, 65),
        "electricity" => (168, 24, 3, 210),
        other => {
            return Err(Error::Config(format!(
                "no built-in constants for dataset {other:?}; supply horizon, seasonality and context explicitly"
            )))
        }
    };
    Ok(DatasetConstants {
        horizon,
        seasonality,
        seg_context_multiplier,
        base_context,
    })
}
