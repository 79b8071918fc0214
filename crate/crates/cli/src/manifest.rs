//! Provenance records written next to every output. Manifests carry no
//! timestamps or absolute paths, so a rerun reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub core_version: String,
    pub config_sha256: Option<String>,
    pub config: Option<serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Location-independent key: the path relative to `base`, climbing with
/// `..` when needed, so renaming the output root leaves keys unchanged.
/// Falls back to the last two components when either path cannot be
/// resolved.
fn key(path: &Path, base: &Path) -> String {
    if let Ok(rel) = path.strip_prefix(base) {
        return rel.to_string_lossy().into_owned();
    }
    if let (Ok(p), Ok(b)) = (path.canonicalize(), base.canonicalize()) {
        let (pc, bc): (Vec<_>, Vec<_>) = (p.components().collect(), b.components().collect());
        let shared = pc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
        let mut rel = PathBuf::new();
        for _ in shared..bc.len() {
            rel.push("..");
        }
        rel.extend(&pc[shared..]);
        return rel.to_string_lossy().into_owned();
    }
    let parts: Vec<_> = path
        .components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect();
    parts[parts.len().saturating_sub(2)..].join("/")
}

/// Manifest path for an output: `<dir>/manifest.json` for directories,
/// `<file>.manifest.json` otherwise.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            core_version: mtaf::VERSION.into(),
            config_sha256: None,
            config: None,
            seeds: BTreeMap::new(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn with_config(mut self, cfg: &LoadedConfig) -> Self {
        self.config_sha256 = Some(cfg.hash());
        self.config = Some(serde_json::to_value(&cfg.raw).expect("config serializes"));
        self
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.parameters
            .insert(name.into(), serde_json::to_value(value).expect("parameter serializes"));
        self
    }

    /// Writes the manifest for `output`; `inputs` and `outputs` are hashed
    /// now, so call this after the outputs are complete.
    pub fn write(&mut self, output: &Path, inputs: &[&Path], outputs: &[&Path]) -> Result<PathBuf> {
        let path = manifest_path_for(output);
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in inputs {
            self.inputs.insert(key(p, &base), sha256_file(p)?);
        }
        for p in outputs {
            self.outputs.insert(key(p, &base), sha256_file(p)?);
        }
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_location_independent() {
        assert_eq!(key(Path::new("/a/b/out/x.jsonl"), Path::new("/a/b/out")), "x.jsonl");
        assert_eq!(
            key(Path::new("/nonexistent/q/data/rdg.jsonl"), Path::new("/a/out")),
            "data/rdg.jsonl"
        );
        let dir = tempfile::tempdir().unwrap();
        let (data, out) = (dir.path().join("data"), dir.path().join("run1/models/m"));
        fs::create_dir_all(&data).unwrap();
        fs::create_dir_all(&out).unwrap();
        fs::write(data.join("rdg.jsonl"), "").unwrap();
        assert_eq!(key(&data.join("rdg.jsonl"), &out), "../../../data/rdg.jsonl");
    }

    #[test]
    fn manifest_names() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(manifest_path_for(dir.path()), dir.path().join("manifest.json"));
        let f = dir.path().join("gen.jsonl");
        assert_eq!(manifest_path_for(&f), dir.path().join("gen.jsonl.manifest.json"));
    }

    #[test]
    fn rewrite_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("out.txt");
        fs::write(&f, "hello").unwrap();
        let mut m = Manifest::new("test");
        m.seed("seed", 3);
        let p = m.write(&f, &[], &[&f]).unwrap();
        let first = fs::read(&p).unwrap();
        Manifest::new("test").seed("seed", 3).write(&f, &[], &[&f]).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
        let parsed: Manifest = serde_json::from_slice(&first).unwrap();
        assert_eq!(parsed.outputs["out.txt"], hex::encode(Sha256::digest(b"hello")));
    }
}
