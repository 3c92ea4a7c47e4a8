//! Per-epoch convergence records and their JSON-lines / CSV forms.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One measurement, taken after `updates_applied` update events.
///
/// One epoch is `m` update events (one expected visit per row); `n_epochs`
/// carries the same count measured in units of `n` events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_index: usize,
    pub n_epochs: f64,
    pub r_sq: f64,
    pub grad_sq: f64,
    pub dist_sq: Option<f64>,
    pub wall_seconds: f64,
    pub updates_applied: u64,
}

impl EpochRecord {
    /// Bitwise equality of everything except wall time.
    pub fn same_numerics(&self, other: &EpochRecord) -> bool {
        self.epoch_index == other.epoch_index
            && self.updates_applied == other.updates_applied
            && self.r_sq.to_bits() == other.r_sq.to_bits()
            && self.grad_sq.to_bits() == other.grad_sq.to_bits()
            && self.dist_sq.map(f64::to_bits) == other.dist_sq.map(f64::to_bits)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub epochs: Vec<EpochRecord>,
    pub config_echo: Value,
    pub final_x: Vec<f64>,
    /// Whether the residual target was met before the epoch budget ran out.
    pub converged: bool,
}

impl Trace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// First epoch whose `r_sq` is at or below `target`.
    pub fn epochs_to(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|r| r.r_sq <= target)
            .map(|r| r.epoch_index)
    }

    /// Bitwise equality of records and final iterate, ignoring wall time.
    pub fn same_numerics(&self, other: &Trace) -> bool {
        self.epochs.len() == other.epochs.len()
            && self
                .epochs
                .iter()
                .zip(&other.epochs)
                .all(|(a, b)| a.same_numerics(b))
            && self.final_x.len() == other.final_x.len()
            && self
                .final_x
                .iter()
                .zip(&other.final_x)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Header line with the run configuration, then one line per epoch.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = json!({
            "schema": SCHEMA_VERSION,
            "record": "config",
            "epoch_unit": "m_updates",
            "converged": self.converged,
            "config": self.config_echo,
        });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for rec in &self.epochs {
            let mut v = serde_json::to_value(rec)?;
            let obj = v.as_object_mut().expect("record serializes to an object");
            obj.insert("schema".into(), json!(SCHEMA_VERSION));
            obj.insert("record".into(), json!("epoch"));
            writeln!(w, "{}", serde_json::to_string(&v)?)?;
        }
        Ok(())
    }

    /// Parses the output of [`Trace::write_jsonl`]. `final_x` is not part of
    /// the JSON-lines form and comes back empty.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace> {
        let mut trace = Trace {
            epochs: Vec::new(),
            config_echo: Value::Null,
            final_x: Vec::new(),
            converged: false,
        };
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line)?;
            if v["schema"].as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "unsupported trace schema".into(),
                });
            }
            match v["record"].as_str() {
                Some("config") => {
                    trace.config_echo = v["config"].clone();
                    trace.converged = v["converged"].as_bool().unwrap_or(false);
                }
                Some("epoch") => trace.epochs.push(serde_json::from_value(v)?),
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: "unknown record type".into(),
                    })
                }
            }
        }
        Ok(trace)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for rec in &self.epochs {
            wr.serialize(rec).map_err(csv_err)?;
        }
        if self.epochs.is_empty() {
            wr.write_record([
                "epoch_index",
                "n_epochs",
                "r_sq",
                "grad_sq",
                "dist_sq",
                "wall_seconds",
                "updates_applied",
            ])
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
