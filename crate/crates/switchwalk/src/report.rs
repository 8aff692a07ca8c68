//! Report data model and file emission: one JSON document with full
//! provenance per scenario run, CSV tables for grids and sweeps, and an
//! optional path-trace dump. All writes are atomic (temp file + rename).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, SwitchedPathRecord};
use crate::error::{Error, Result};
use crate::estimate::OccupancyGrid;
use crate::scenario::Scenario;
use crate::validate::ValidationReport;

/// One named tolerance check inside an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    /// Observed statistic.
    pub observed: f64,
    /// The declared bound or target it was compared against.
    pub bound: f64,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: &str, pass: bool, observed: f64, bound: f64, detail: String) -> Self {
        Self { name: name.into(), pass, observed, bound, detail }
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: String,
    pub pass: bool,
    pub checks: Vec<CheckLine>,
    /// Full op-level report for replay and inspection.
    pub details: serde_json::Value,
}

/// The whole scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    /// The fully resolved scenario (re-running it reproduces this report).
    pub scenario: Scenario,
    pub validation: Option<ValidationReport>,
    pub experiments: Vec<ExperimentResult>,
    pub overall_pass: bool,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Write `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV table of an occupation grid: `bin_index, x..., value, stderr`.
pub fn grid_csv(grid: &OccupancyGrid) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = grid.ball.dim();
    let mut header = vec!["bin_index".to_string()];
    for k in 0..d {
        header.push(format!("x{k}"));
    }
    header.push("value".into());
    header.push("stderr".into());
    w.write_record(&header).map_err(csv_err)?;
    for b in 0..grid.n_bins() {
        let c = grid.bin_center(b);
        let mut rec = vec![b.to_string()];
        rec.extend(c.iter().map(|v| format!("{v}")));
        rec.push(format!("{}", grid.values[b]));
        rec.push(format!("{}", grid.stderr[b]));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

/// One row of a sweep table: `radius, statistic, value, stderr, pass`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub radius: f64,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
    pub pass: bool,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["radius", "statistic", "value", "stderr", "pass"]).map_err(csv_err)?;
    for r in rows {
        w.write_record(&[
            format!("{}", r.radius),
            r.statistic.clone(),
            format!("{}", r.value),
            format!("{}", r.stderr),
            r.pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(e.to_string())
}

/// Path-trace dump: one event per line, `stream_id t x... level kind`.
pub fn trace_lines(records: &[SwitchedPathRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        for ev in &rec.events {
            let kind = match ev.kind {
                EventKind::DiffusionStep => "step",
                EventKind::Jump => "jump",
                EventKind::Switch => "switch",
                EventKind::Kill => "kill",
                EventKind::Exit => "exit",
            };
            out.push_str(&format!("{} {:.9}", rec.rng_stream_id, ev.t));
            for c in &ev.x {
                out.push_str(&format!(" {c:.9}"));
            }
            out.push_str(&format!(" {} {kind}\n", ev.level));
        }
    }
    out
}

/// File names used for a scenario's outputs.
pub struct OutputPaths {
    pub json: PathBuf,
    pub dir: PathBuf,
}

impl OutputPaths {
    pub fn new(out_dir: &Path, scenario_name: &str) -> Self {
        Self {
            json: out_dir.join(format!("{scenario_name}.report.json")),
            dir: out_dir.to_path_buf(),
        }
    }

    pub fn csv(&self, scenario_name: &str, label: &str) -> PathBuf {
        self.dir.join(format!("{scenario_name}.{label}.csv"))
    }

    pub fn trace(&self, scenario_name: &str) -> PathBuf {
        self.dir.join(format!("{scenario_name}.trace.txt"))
    }
}
