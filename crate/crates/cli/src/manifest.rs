//! Run manifest written next to every result file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command_line: Vec<String>,
    pub subcommand: String,
    /// Effective settings after merging the config file and the flags,
    /// defaults included.
    pub config: BTreeMap<String, String>,
    /// Flags that reproduce the run without the config file.
    pub replay: Vec<String>,
    pub seed: u64,
    pub shards: u32,
    pub shapes: Vec<[u32; 2]>,
    pub started: String,
    pub finished: Option<String>,
    pub status: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    /// Path of the manifest that belongs to a result file.
    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
