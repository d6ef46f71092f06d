//! CSV rows and provenance sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{io_err, CliError};

pub const CSV_SCHEMA: &str = "wmfloq-csv v1";

/// One line of the observables table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "L")]
    pub l: usize,
    pub r: usize,
    pub t: f64,
    pub seed: u64,
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
    pub n_outer: usize,
    pub n_inner: usize,
}

/// Writes `# <schema>` followed by the header and rows.
pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut buf = Vec::new();
    writeln!(buf, "# {CSV_SCHEMA}").expect("in-memory write");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Csv(e.to_string()))?;
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))).collect()
}

/// Sidecar describing how an artifact was produced.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance<'a, D: Serialize> {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a [String],
    pub config: &'a RunConfig,
    pub overrides: &'a [String],
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub diagnostics: D,
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.json");
    artifact.with_file_name(name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `value` to `path` through a temporary file and a rename.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_vec(value).map_err(|e| CliError::Io { path: path.into(), msg: e.to_string() })?;
    std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
