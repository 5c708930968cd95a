//! Output directory handling: reports, configs, CSV tables and plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use derivbound::io::save_field;
use derivbound::torus::TorusField;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{self, Axes, Series};

pub const SCHEMA_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.record(name);
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Failure(format!("cannot serialize {name}: {e}")))?;
        body.push('\n');
        self.text(name, &body)
    }

    /// Header row plus one row per record; floats use the shortest
    /// round-trip representation.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(name);
        write_csv(&path, header, rows)?;
        self.record(name);
        Ok(())
    }

    pub fn field(&mut self, name: &str, f: &TorusField) -> Result<(), CliError> {
        save_field(f, &self.path(name))?;
        self.record(name);
        Ok(())
    }

    pub fn chart(&mut self, name: &str, axes: Axes<'_>, series: &[Series]) -> Result<(), CliError> {
        self.text(name, &svg::line_chart(axes, series))
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Renders a float for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Outcome {
    pub result: Value,
    pub violations: Vec<String>,
}

/// Writes `report.json`, `run_config.json` and `run_metadata.json`.
/// Only the metadata carries wall-clock values.
pub fn finish(
    out: &mut OutDir,
    cfg: &RunConfig,
    outcome: &Outcome,
    started: f64,
) -> Result<(), CliError> {
    let report = json!({
        "schemaVersion": SCHEMA_VERSION,
        "command": cfg.command.name(),
        "config": cfg,
        "result": outcome.result,
        "violations": outcome.violations,
    });
    out.json("report.json", &report)?;
    out.json("run_config.json", cfg)?;
    let finished = unix_seconds();
    let meta = json!({
        "schemaVersion": SCHEMA_VERSION,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "startedAt": started,
        "finishedAt": finished,
        "elapsedSeconds": finished - started,
        "files": out.files(),
    });
    out.json("run_metadata.json", &meta)
}

pub fn now() -> f64 {
    unix_seconds()
}
