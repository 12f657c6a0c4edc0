//! Artifact manifest: one record per file a command wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: String,
    pub seed: u64,
    pub sha256: String,
    /// False when the stage failed after writing this file.
    pub complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub artifacts: Vec<ArtifactRecord>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Option<Manifest>> {
        let path = out.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| LabError::format(&path, e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LabError::io(path, e)),
        }
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| LabError::io(path, e))
    }

    pub fn get(&self, path: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    /// Replaces every record of `stage` and every record of the same paths.
    pub fn replace_stage(&mut self, stage: &str, records: Vec<ArtifactRecord>) {
        self.artifacts.retain(|a| a.stage != stage && records.iter().all(|r| r.path != a.path));
        self.artifacts.extend(records);
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    }
}

/// Writes the files of one stage and remembers what it wrote.
#[derive(Debug)]
pub struct StageWriter {
    out: PathBuf,
    stage: String,
    seed: u64,
    records: Vec<ArtifactRecord>,
}

impl StageWriter {
    pub fn new(out: &Path, stage: &str, seed: u64) -> Self {
        StageWriter { out: out.to_path_buf(), stage: stage.to_string(), seed, records: Vec::new() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.record(rel, bytes);
        Ok(path)
    }

    /// Records a file some other writer already produced.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let path = self.path(rel);
        let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
        self.record(rel, &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.records.retain(|r| r.path != rel);
        self.records.push(ArtifactRecord {
            path: rel.to_string(),
            stage: self.stage.clone(),
            seed: self.seed,
            sha256: sha256_hex(bytes),
            complete: true,
        });
    }

    /// Merges the records into the manifest on disk; on failure they are
    /// flagged partial.
    pub fn finish(mut self, master_seed: u64, complete: bool) -> Result<Manifest> {
        for r in &mut self.records {
            r.complete = complete;
        }
        let mut manifest = Manifest::load(&self.out)?.unwrap_or_default();
        manifest.master_seed = master_seed;
        manifest.replace_stage(&self.stage, self.records);
        manifest.save(&self.out)?;
        Ok(manifest)
    }
}
