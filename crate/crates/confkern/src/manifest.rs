//! Run manifests: one JSON sidecar per results file, named
//! `<results>.manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use confkern_core::eval::Improvement;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::{write_json, ResultRow};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellRecord {
    Done {
        row: ResultRow,
        improvement: Option<Improvement>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    /// The full configuration the run was started with.
    pub config: serde_json::Value,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<PathBuf>,
    /// Grid cells by key; empty for single-shot commands.
    #[serde(default)]
    pub cells: BTreeMap<String, CellRecord>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    results.with_file_name(name)
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        seed: u64,
        config: &C,
        outputs: Vec<PathBuf>,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: MANIFEST_SCHEMA,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).map_err(|e| CliError::data(e.to_string()))?,
            started_unix: now_unix(),
            finished_unix: None,
            outputs,
            cells: BTreeMap::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA {
            return Err(CliError::data(format!(
                "{}: manifest schema {} is not supported",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn finish(&mut self) {
        self.finished_unix = Some(now_unix());
    }

    pub fn completed(&self, key: &str) -> Option<&ResultRow> {
        match self.cells.get(key) {
            Some(CellRecord::Done { row, .. }) => Some(row),
            _ => None,
        }
    }
}
