use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use super::PipelineError;

pub const STAGE_MANIFEST_SCHEMA: u32 = 1;

/// Pipeline stages in execution order, with the directory each writes to.
pub const STAGES: [(&str, &str); 8] = [
    ("group", "images"),
    ("tile", "tiles"),
    ("match", "matches"),
    ("sfm", "sfm"),
    ("dense", "dense"),
    ("upgrade", "euclidean"),
    ("fuse", "euclidean"),
    ("eval", "eval"),
];

pub fn stage_dir(stage: &str) -> &'static str {
    STAGES
        .iter()
        .find(|(s, _)| *s == stage)
        .map(|(_, d)| *d)
        .unwrap_or_else(|| panic!("unknown stage {stage}"))
}

/// `<dir>/<stage>.manifest.json`: what a stage read and wrote. Written
/// last, so a stage without a manifest never counts as complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub schema_version: u32,
    pub stage: String,
    pub config_hash: String,
    /// Path (as configured, or relative to the workspace) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Creates the root and every stage directory.
    pub fn init(&self) -> Result<(), PipelineError> {
        for (_, dir) in STAGES {
            let p = self.root.join(dir);
            fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
        Ok(())
    }

    /// Absolute form of a configured path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join(stage_dir(stage)).join(format!("{stage}.manifest.json"))
    }

    pub fn read_manifest(&self, stage: &str) -> Option<StageManifest> {
        let text = fs::read_to_string(self.manifest_path(stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Requires `stage` to have completed.
    pub fn require(&self, stage: &str, by: &str) -> Result<StageManifest, PipelineError> {
        self.read_manifest(stage).ok_or_else(|| {
            PipelineError::new(by, "MissingInput", format!("stage {stage} has not completed in {}", self.root.display()))
        })
    }

    pub fn write_manifest(&self, m: &StageManifest) -> Result<(), PipelineError> {
        let p = self.manifest_path(&m.stage);
        let text = serde_json::to_string_pretty(m).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| PipelineError::io(&p, e))
    }

    pub fn remove_manifest(&self, stage: &str) -> Result<(), PipelineError> {
        let p = self.manifest_path(stage);
        match fs::remove_file(&p) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(PipelineError::io(&p, e)),
        }
    }

    /// Hashes of `paths` keyed by their display form.
    pub fn hash_all(&self, paths: &[PathBuf]) -> Result<BTreeMap<String, String>, PipelineError> {
        paths
            .iter()
            .map(|p| Ok((self.key(p), hash_file(&self.resolve(p))?)))
            .collect()
    }

    /// Workspace-relative key of a path, with `/` separators.
    pub fn key(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Whether the recorded run of `stage` used this config and these
    /// inputs, and its outputs are untouched.
    pub fn up_to_date(&self, stage: &str, config_hash: &str, inputs: &BTreeMap<String, String>) -> bool {
        let Some(m) = self.read_manifest(stage) else { return false };
        if m.schema_version != STAGE_MANIFEST_SCHEMA || m.config_hash != config_hash || &m.inputs != inputs {
            return false;
        }
        m.outputs
            .iter()
            .all(|(k, h)| hash_file(&self.resolve(Path::new(k))).map(|cur| &cur == h).unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(ws: &Workspace, out: &Path) -> StageManifest {
        StageManifest {
            schema_version: STAGE_MANIFEST_SCHEMA,
            stage: "tile".into(),
            config_hash: "abc".into(),
            inputs: BTreeMap::new(),
            outputs: ws.hash_all(&[out.to_path_buf()]).unwrap(),
            summary: serde_json::Value::Null,
        }
    }

    #[test]
    fn stale_on_config_or_output_change() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path());
        ws.init().unwrap();
        let out = ws.path("tiles/tiles.json");
        fs::write(&out, "x").unwrap();
        ws.write_manifest(&manifest(&ws, &out)).unwrap();
        assert!(ws.up_to_date("tile", "abc", &BTreeMap::new()));
        assert!(!ws.up_to_date("tile", "abd", &BTreeMap::new()));
        fs::write(&out, "y").unwrap();
        assert!(!ws.up_to_date("tile", "abc", &BTreeMap::new()));
        ws.remove_manifest("tile").unwrap();
        assert!(ws.read_manifest("tile").is_none());
    }

    #[test]
    fn keys_are_relative() {
        let ws = Workspace::new("/tmp/ws");
        assert_eq!(ws.key(&ws.path("sfm/g0.json")), "sfm/g0.json");
        assert_eq!(ws.key(Path::new("synth/gcps.csv")), "synth/gcps.csv");
    }
}
