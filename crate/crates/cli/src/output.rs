//! Output directory handling: atomic file writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::settings::Settings;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    /// The directory itself is created on the first write.
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place, so readers never see a partial file.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.path(name);
        let fail = |e: std::io::Error| CliError::Input(format!("cannot write {}: {e}", target.display()));
        fs::create_dir_all(&self.dir).map_err(fail)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(fail)?;
        tmp.write_all(contents).map_err(fail)?;
        tmp.as_file().sync_all().map_err(fail)?;
        tmp.persist(&target).map_err(|e| fail(e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Compute(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Input {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    version: u32,
    command: &'a str,
    tool_version: &'static str,
    seed: Option<u64>,
    seed_source: Option<&'a str>,
    config_file: Option<String>,
    config: &'a BTreeMap<String, Value>,
    config_hash: String,
    inputs: Vec<Input>,
    outputs: &'a [&'a str],
}

/// Everything needed to replay a run; written before any long computation.
/// The output directory and worker count are left out: neither changes the
/// results.
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub seed: Option<(u64, &'a str)>,
    pub inputs: Vec<(&'a str, &'a Path)>,
    pub outputs: &'a [&'a str],
}

pub fn write_manifest(out: &OutputDir, settings: &Settings, run: &RunRecord) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let mut all: Vec<(&str, &Path)> = run.inputs.clone();
    if let Some(cfg) = settings.config_path() {
        all.push(("config", cfg));
    }
    for (role, path) in all {
        let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        inputs.push(Input {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let config = settings.effective();
    let canonical = serde_json::to_string(config).expect("config serializes");
    let doc = Manifest {
        format: "mixclust.manifest",
        version: 1,
        command: run.command,
        tool_version: mixclust_core::VERSION,
        seed: run.seed.map(|s| s.0),
        seed_source: run.seed.map(|s| s.1),
        config_file: settings.config_path().map(|p| p.display().to_string()),
        config,
        config_hash: sha256_hex(canonical.as_bytes()),
        inputs,
        outputs: run.outputs,
    };
    out.write_json(MANIFEST, &doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(&dir.path().join("nested"));
        out.write("a.txt", b"one").unwrap();
        out.write("a.txt", b"two").unwrap();
        assert_eq!(fs::read(out.path("a.txt")).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path().join("nested")).unwrap().count(), 1);
    }
}
