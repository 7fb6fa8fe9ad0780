//! Run reports and the CSV files they point to.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{CycleCost, EvalConfig};
use crate::experiment::{SweepRow, TraceRow};
use crate::proactive::ScalingCurve;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SCALING_COLUMNS: [&str; 6] = ["N", "c_nonproactive", "c_proactive", "delta_c", "ratio", "stderr"];
pub const TRACE_COLUMNS: [&str; 3] = ["iter", "f0", "residual"];
pub const SLOT_COLUMNS: [&str; 4] = ["slot", "engine", "value", "stderr"];
pub const SWEEP_COLUMNS: [&str; 4] = ["peak", "c_nonproactive", "c_proactive", "error"];

/// Summary of one command, written as JSON next to its CSV outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub tool_version: String,
    pub scenario_hash: Option<String>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of every file written, keyed by file name.
    pub files: BTreeMap<String, String>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, scenario_hash: Option<String>) -> Self {
        Self {
            command: command.into(),
            tool_version: TOOL_VERSION.to_string(),
            scenario_hash,
            metrics: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        self.metrics.insert(name.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Records the checksum of a file that has been written.
    pub fn attach(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.files.insert(name, file_sha256(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Invalid(format!("csv: {other:?}")),
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scaling_csv(path: &Path, curve: &ScalingCurve) -> Result<()> {
    write_rows(
        path,
        &SCALING_COLUMNS,
        curve.points.iter().map(|p| {
            vec![
                p.users.to_string(),
                p.c_nonproactive.to_string(),
                p.c_proactive.to_string(),
                p.delta_c.to_string(),
                p.ratio.to_string(),
                p.stderr.to_string(),
            ]
        }),
    )
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_rows(
        path,
        &TRACE_COLUMNS,
        trace
            .iter()
            .map(|r| vec![r.iter.to_string(), r.f0.to_string(), r.residual.to_string()]),
    )
}

pub fn write_slot_csv(path: &Path, cfg: &EvalConfig, cost: &CycleCost) -> Result<()> {
    write_rows(
        path,
        &SLOT_COLUMNS,
        cost.per_slot.iter().enumerate().map(|(t, e)| {
            vec![
                t.to_string(),
                cfg.engine.name().to_string(),
                e.value.to_string(),
                e.stderr.to_string(),
            ]
        }),
    )
}

pub fn write_sweep_csv(path: &Path, sweep: &[SweepRow]) -> Result<()> {
    write_rows(
        path,
        &SWEEP_COLUMNS,
        sweep.iter().map(|r| {
            vec![
                r.peak.to_string(),
                opt(r.c_nonproactive),
                opt(r.c_proactive),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Generic table writer for commands with ad hoc outputs.
pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_rows(path, header, rows)
}
