//! Run manifests: everything needed to repeat a command and check that its
//! outputs come out byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::Ctx;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path) -> CliResult<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Artifact { path: path.to_path_buf(), sha256: sha256_hex(&data), bytes: data.len() as u64 })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_secs: f64,
    pub wall_secs: f64,
    /// Named phases such as loading, training and evaluation.
    #[serde(default)]
    pub phases: BTreeMap<String, f64>,
    /// Per-epoch wall time, for training runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epochs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub data_dir: Option<PathBuf>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub timings: Timings,
}

/// Accumulates a manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(ctx: &Ctx, subcommand: &str) -> Self {
        let started_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Recorder {
            manifest: RunManifest {
                manifest_version: MANIFEST_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                subcommand: subcommand.to_string(),
                argv: ctx.argv.clone(),
                cwd: std::env::current_dir().unwrap_or_default(),
                data_dir: ctx.data_dir.clone(),
                config: serde_json::Value::Null,
                seeds: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Timings { started_unix_secs, ..Timings::default() },
            },
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, config: &impl Serialize) -> CliResult<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn seeds(&mut self, seeds: &[u64]) {
        self.manifest.seeds = seeds.to_vec();
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn phase(&mut self, name: &str, since: Instant) {
        self.manifest.timings.phases.insert(name.to_string(), since.elapsed().as_secs_f64());
    }

    pub fn epoch_times(&mut self, secs: Vec<f64>) {
        self.manifest.timings.epochs = secs;
    }

    /// Stamps the total wall time and writes the manifest atomically.
    pub fn write(mut self, path: &Path) -> CliResult<RunManifest> {
        self.manifest.timings.wall_secs = self.started.elapsed().as_secs_f64();
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
}

/// `out.jsonl` gets `out.jsonl.manifest.json` beside it.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn sha256_hex(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path_for(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
