use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one invocation: enough to rerun it and check the outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub build: String,
    pub seed: u64,
    pub jobs: usize,
    /// Resolved configuration in the flat `key = value` form.
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn build_id() -> String {
    match option_env!("COREF_GIT_REV") {
        Some(rev) => format!("coref {} ({rev})", env!("CARGO_PKG_VERSION")),
        None => format!("coref {}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a file, or of every regular file below a directory in path order.
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        let mut hasher = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update(std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?);
        }
        Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, jobs: usize, config: String) -> Self {
        Self {
            command: command.to_string(),
            build: build_id(),
            seed,
            jobs,
            config,
            started_unix: unix_now(),
            finished_unix: 0.0,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), digest_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), digest_path(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))?;
        tracing::info!(manifest = %path.display(), command = %self.command, "run manifest written");
        Ok(())
    }
}

/// `<artifact>.manifest.json` next to the primary output.
pub fn default_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_path_sits_beside_artifact() {
        assert_eq!(default_path(Path::new("out/model.ckpt")), PathBuf::from("out/model.ckpt.manifest.json"));
    }
}
