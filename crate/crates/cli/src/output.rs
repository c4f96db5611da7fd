use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One per run, written last as `manifest.json` in the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub resolved_config: Value,
    pub data: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub tool_version: &'static str,
    pub threads: usize,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    /// File names relative to `out_dir`.
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Output directory of one run. Every artifact goes through here so nothing
/// lands outside `dir`.
pub struct RunDir {
    pub dir: PathBuf,
    pub format: Format,
    outputs: Vec<String>,
    started: f64,
}

impl RunDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            outputs: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::output(&self.dir.join(name), e))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `{stem}.csv` or `{stem}.json` depending on the run format; JSON
    /// is an array of objects keyed by the header. Empty cells become null.
    pub fn write_table(
        &mut self,
        stem: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<String, CliError> {
        let name = format!("{stem}.{}", self.format.extension());
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let fail = |e: csv::Error| CliError::output(&self.dir.join(&name), e);
                w.write_record(header).map_err(fail)?;
                for row in rows {
                    w.write_record(row).map_err(fail)?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| CliError::output(&self.dir.join(&name), e))?;
                self.write_bytes(&name, &bytes)?;
            }
            Format::Json => {
                let records: Vec<Value> = rows
                    .iter()
                    .map(|row| {
                        let obj = header
                            .iter()
                            .zip(row)
                            .map(|(h, cell)| (h.to_string(), cell_value(cell)));
                        Value::Object(obj.collect())
                    })
                    .collect();
                self.write_json(&name, &records)?;
            }
        }
        Ok(name)
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.out_dir = self.dir.clone();
        manifest.started_unix_s = self.started;
        manifest.finished_unix_s = unix_now();
        manifest.outputs = std::mem::take(&mut self.outputs);
        self.write_json("manifest.json", &manifest)
    }
}

fn cell_value(cell: &str) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    if let Ok(v) = cell.parse::<i64>() {
        return Value::from(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Value::from(v),
        _ => match cell {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => Value::from(cell),
        },
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
