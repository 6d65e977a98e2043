//! Model document: a self-describing text file holding a fitted (or
//! hand-written) parameter set plus free-form metadata.
//!
//! Floats are written with 17 significant digits, which pins every f64
//! exactly: writing and re-reading a document reproduces the parameters bit
//! for bit, and two runs with the same inputs produce byte-identical files.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::regime::{RegimeError, SwitchingParams};
use crate::series::Transform;

const MAGIC: &str = "# lobregime model v1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model i/o: {0}")]
    Io(#[from] io::Error),
    #[error("model file line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Invalid(#[from] RegimeError),
}

/// A parameter set plus ordered metadata pairs (transform, band, side, seed,
/// fit diagnostics, ...). Metadata keys are free-form and round-trip
/// verbatim; [`ModelDocument::transform`] gives typed access to the one key
/// consumers need for consistency checks.
#[derive(Debug, Clone)]
pub struct ModelDocument {
    pub params: SwitchingParams,
    pub meta: Vec<(String, String)>,
}

impl ModelDocument {
    pub fn new(params: SwitchingParams) -> Self {
        ModelDocument { params, meta: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Data transform the model was fitted on, when recorded.
    pub fn transform(&self) -> Option<Transform> {
        self.meta_value("transform").and_then(|v| v.parse().ok())
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_vec(v: &[f64]) -> String {
    v.iter().map(|&x| format_f64(x)).collect::<Vec<_>>().join(",")
}

pub fn write_model<W: Write>(mut out: W, doc: &ModelDocument) -> io::Result<()> {
    let p = &doc.params;
    let k = p.num_states();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "k={k}")?;
    writeln!(out, "alpha={}", format_vec(&p.alpha))?;
    writeln!(out, "beta_lag={}", format_vec(&p.beta_lag))?;
    writeln!(out, "beta_dbam={}", format_vec(&p.beta_dbam))?;
    writeln!(out, "sigma={}", format_vec(&p.sigma))?;
    for i in 0..k {
        writeln!(out, "trans_row_{}={}", i + 1, format_vec(p.trans_row(i)))?;
    }
    writeln!(out, "init_dist={}", format_vec(&p.init_dist))?;
    for (key, value) in &doc.meta {
        writeln!(out, "{key}={value}")?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(input: R) -> Result<ModelDocument, ModelError> {
    let mut k: Option<usize> = None;
    let mut alpha = None;
    let mut beta_lag = None;
    let mut beta_dbam = None;
    let mut sigma = None;
    let mut trans_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut init_dist = None;
    let mut meta = Vec::new();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ModelError::Parse {
            line: line_no,
            reason: "expected key=value".to_string(),
        })?;
        match key {
            "k" => {
                k = Some(value.parse().map_err(|_| ModelError::Parse {
                    line: line_no,
                    reason: format!("bad state count {value:?}"),
                })?)
            }
            "alpha" => alpha = Some(parse_vec(value, line_no)?),
            "beta_lag" => beta_lag = Some(parse_vec(value, line_no)?),
            "beta_dbam" => beta_dbam = Some(parse_vec(value, line_no)?),
            "sigma" => sigma = Some(parse_vec(value, line_no)?),
            "init_dist" => init_dist = Some(parse_vec(value, line_no)?),
            _ => {
                if let Some(row) = key.strip_prefix("trans_row_") {
                    let row: usize = row.parse().map_err(|_| ModelError::Parse {
                        line: line_no,
                        reason: format!("bad transition row label {key:?}"),
                    })?;
                    trans_rows.push((row, parse_vec(value, line_no)?));
                } else {
                    meta.push((key.to_string(), value.to_string()));
                }
            }
        }
    }

    let k = k.ok_or_else(|| missing("k"))?;
    let mut trans = vec![0.0; k * k];
    if trans_rows.len() != k {
        return Err(missing("trans_row_*"));
    }
    for (row, values) in trans_rows {
        if row < 1 || row > k || values.len() != k {
            return Err(ModelError::Parse {
                line: 0,
                reason: format!("transition row {row} inconsistent with k={k}"),
            });
        }
        trans[(row - 1) * k..row * k].copy_from_slice(&values);
    }
    let params = SwitchingParams::new(
        alpha.ok_or_else(|| missing("alpha"))?,
        beta_lag.ok_or_else(|| missing("beta_lag"))?,
        beta_dbam.ok_or_else(|| missing("beta_dbam"))?,
        sigma.ok_or_else(|| missing("sigma"))?,
        trans,
        init_dist.ok_or_else(|| missing("init_dist"))?,
    )?;
    Ok(ModelDocument { params, meta })
}

fn missing(key: &str) -> ModelError {
    ModelError::Parse {
        line: 0,
        reason: format!("missing required key {key}"),
    }
}

fn parse_vec(raw: &str, line: u64) -> Result<Vec<f64>, ModelError> {
    raw.split(',')
        .map(|part| {
            part.trim().parse::<f64>().map_err(|_| ModelError::Parse {
                line,
                reason: format!("bad float {part:?}"),
            })
        })
        .collect()
}
