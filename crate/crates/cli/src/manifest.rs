//! Run manifest: everything needed to repeat a run, written before any
//! result file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use semimo::channel::Convention;
use semimo::harness::Averaging;
use semimo::{Error, Result};
use serde::{Deserialize, Serialize};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub convention: Convention,
    pub averaging: Averaging,
    pub max_deviation_db: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective configuration as `key -> value`, the same keys a config
    /// file accepts.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: usize,
    /// Set by `calibrate`, or copied from the manifest passed to
    /// `--calibration`.
    pub calibrated: Option<Calibrated>,
    pub reference: Option<PathBuf>,
    pub started_unix_s: u64,
    pub finished_unix_s: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

pub fn now_unix_s() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| io_error(&path, std::io::Error::other(e)))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Writes through a `.partial` sibling and renames, so an interrupted run
/// never leaves a truncated result file under the final name.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}
