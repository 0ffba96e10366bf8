//! Atomic file output and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{CliError, Result};

fn parent(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent(path);
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Builds a directory under a temporary name beside `path` and renames it
/// into place once `fill` succeeds. `path` must not exist yet.
pub fn write_dir_atomic(path: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if path.exists() {
        return Err(CliError::Usage(format!("{} already exists", path.display())));
    }
    let dir = parent(path);
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".evseg-")
        .tempdir_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    fill(tmp.path())?;
    let built = tmp.keep();
    fs::rename(&built, path).map_err(|e| {
        let _ = fs::remove_dir_all(&built);
        CliError::io(path, e)
    })
}

/// `<file>.manifest.json` for file outputs.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub started: String,
    pub finished: String,
}

pub struct RunClock {
    started: OffsetDateTime,
}

fn stamp(t: OffsetDateTime) -> String {
    t.format(&Rfc3339).expect("UTC timestamps format as RFC 3339")
}

impl RunClock {
    pub fn start() -> Self {
        Self {
            started: OffsetDateTime::now_utc(),
        }
    }

    pub fn manifest(
        &self,
        command: &str,
        config: Option<PathBuf>,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config,
            seed,
            inputs,
            outputs,
            version: format!("v{}", env!("CARGO_PKG_VERSION")),
            started: stamp(self.started),
            finished: stamp(OffsetDateTime::now_utc()),
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
