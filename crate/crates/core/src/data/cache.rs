//! Columnar text cache for augmented datasets.
//!
//! ```text
//! # covcast augmented v1
//! @series <id> gamma=<γ> seed=<seed> k=<k> skip=<leads|->
//! t y x1 x2 x3
//! 1 <y_1> <x_1^1> <x_1^2> <x_1^3>
//! ...
//! @end
//! ```
//!
//! `t` is 1-based. Only active leads get a column; a covariate with no
//! ground truth at `t` is written `?`. Floats use shortest round-trip
//! formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::covariates::{mean_std, pearson_cc, AugmentedSeries, Covariate};
use crate::error::{Error, Result};

const MAGIC: &str = "# covcast augmented v1";

pub fn write_augmented(ids: &[String], series: &[AugmentedSeries], seed: u64) -> String {
    let mut out = String::from(MAGIC);
    out.push('\n');
    for (id, s) in ids.iter().zip(series) {
        let skip = if s.skip.is_empty() {
            "-".to_string()
        } else {
            s.skip.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(out, "@series {id} gamma={} seed={seed} k={} skip={skip}", s.gamma, s.k);
        out.push_str("t y");
        for c in &s.covariates {
            let _ = write!(out, " x{}", c.lead);
        }
        out.push('\n');
        for (t, y) in s.y.iter().enumerate() {
            let _ = write!(out, "{} {y}", t + 1);
            for c in &s.covariates {
                match c.values.get(t) {
                    Some(v) => {
                        let _ = write!(out, " {v}");
                    }
                    None => out.push_str(" ?"),
                }
            }
            out.push('\n');
        }
        out.push_str("@end\n");
    }
    out
}

pub fn save_augmented(path: &Path, ids: &[String], series: &[AugmentedSeries], seed: u64) -> Result<()> {
    fs::write(path, write_augmented(ids, series, seed)).map_err(|e| Error::io(path, e))
}

pub fn load_augmented(path: &Path) -> Result<(Vec<String>, Vec<AugmentedSeries>, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_augmented(&text)
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn kv<'a>(line: usize, tok: Option<&'a str>, key: &str) -> Result<&'a str> {
    tok.and_then(|t| t.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| perr(line, format!("expected {key}=...")))
}

/// Parse a cache document into `(ids, series, seed)`.
pub fn read_augmented(text: &str) -> Result<(Vec<String>, Vec<AugmentedSeries>, u64)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(perr(1, "missing cache header")),
    }
    let mut ids = Vec::new();
    let mut out = Vec::new();
    let mut seed = 0;
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        if tok.next() != Some("@series") {
            return Err(perr(ln, "expected @series"));
        }
        let id = tok.next().ok_or_else(|| perr(ln, "missing id"))?.to_string();
        let gamma: f64 = kv(ln, tok.next(), "gamma")?
            .parse()
            .map_err(|_| perr(ln, "bad gamma"))?;
        seed = kv(ln, tok.next(), "seed")?.parse().map_err(|_| perr(ln, "bad seed"))?;
        let k: usize = kv(ln, tok.next(), "k")?.parse().map_err(|_| perr(ln, "bad k"))?;
        let skip_raw = kv(ln, tok.next(), "skip")?;
        let skip: Vec<usize> = if skip_raw == "-" {
            Vec::new()
        } else {
            skip_raw
                .split(',')
                .map(|s| s.parse().map_err(|_| perr(ln, "bad skip")))
                .collect::<Result<_>>()?
        };

        let (hl, header) = lines.next().ok_or_else(|| perr(ln, "missing column header"))?;
        let cols: Vec<&str> = header.split_whitespace().collect();
        if cols.len() < 2 || cols[0] != "t" || cols[1] != "y" {
            return Err(perr(hl, "column header must start with `t y`"));
        }
        let leads: Vec<usize> = cols[2..]
            .iter()
            .map(|c| {
                c.strip_prefix('x')
                    .and_then(|l| l.parse().ok())
                    .ok_or_else(|| perr(hl, "bad column"))
            })
            .collect::<Result<_>>()?;

        let mut y = Vec::new();
        let mut xs: Vec<Vec<f64>> = vec![Vec::new(); leads.len()];
        loop {
            let (rl, row) = lines.next().ok_or_else(|| perr(ln, "unterminated series block"))?;
            if row == "@end" {
                break;
            }
            let fields: Vec<&str> = row.split_whitespace().collect();
            if fields.len() != cols.len() {
                return Err(perr(rl, "wrong column count"));
            }
            y.push(fields[1].parse().map_err(|_| perr(rl, "bad y"))?);
            for (j, f) in fields[2..].iter().enumerate() {
                if *f != "?" {
                    xs[j].push(f.parse().map_err(|_| perr(rl, "bad covariate"))?);
                }
            }
        }
        let (mu, sigma) = mean_std(&y);
        let covariates = leads
            .iter()
            .zip(xs)
            .map(|(&lead, values)| {
                let realized_pcc = y.get(lead..).and_then(|t| pearson_cc(&values, t).ok());
                Covariate {
                    lead,
                    values,
                    realized_pcc,
                }
            })
            .collect();
        ids.push(id);
        out.push(AugmentedSeries {
            y,
            k,
            gamma,
            skip,
            covariates,
            mu,
            sigma,
        });
    }
    Ok((ids, out, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::covariates::augment_dataset;

    #[test]
    fn cache_round_trip() {
        let raw: Vec<Vec<f64>> = (0..3)
            .map(|s| (0..25).map(|t| ((t * (s + 2)) as f64).sqrt() + 0.1).collect())
            .collect();
        let aug = augment_dataset(&raw, 3, 0.7, 11, &[2]).unwrap();
        let ids: Vec<String> = (0..3).map(|i| format!("T{i}")).collect();
        let text = write_augmented(&ids, &aug, 11);
        let (ids2, aug2, seed) = read_augmented(&text).unwrap();
        assert_eq!(ids2, ids);
        assert_eq!(seed, 11);
        assert_eq!(aug2, aug);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_augmented("nope").is_err());
        assert!(read_augmented(&format!(
            "{MAGIC}\n@series a gamma=0 seed=1 k=1 skip=-\nt y x1\n1 2 3\n"
        ))
        .is_err());
    }
}
