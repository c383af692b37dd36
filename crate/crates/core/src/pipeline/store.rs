//! Artifact directory: content hashes, sidecars, stage manifests and the
//! directory lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::PipelineConfig;

pub const LOCK_FILE: &str = ".passnet-lab.lock";
const MANIFEST_DIR: &str = ".manifests";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive claim on a pipeline directory, released on drop.
#[derive(Debug)]
pub struct PipelineLock {
    path: PathBuf,
}

impl PipelineLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::LockHeld(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for PipelineLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Metadata written next to every artifact as `<artifact>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub artifact: String,
    pub sha256: String,
    pub fingerprint: String,
    pub seed: u64,
    pub config_hash: String,
    pub stage_config_hash: String,
    /// Input name -> content hash.
    pub inputs: BTreeMap<String, String>,
    pub config: BTreeMap<String, String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    stage: String,
    fingerprint: String,
    /// Relative artifact path -> content hash.
    outputs: BTreeMap<String, String>,
}

/// Where a stage input comes from.
#[derive(Debug, Clone)]
pub enum Input {
    /// A file produced by an earlier stage, relative to the store root.
    Artifact { path: String, stage: &'static str },
    /// A user-supplied file.
    External(PathBuf),
}

impl Input {
    pub fn artifact(path: impl Into<String>, stage: &'static str) -> Self {
        Input::Artifact {
            path: path.into(),
            stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    Ran(Vec<String>),
    /// Fingerprint and outputs unchanged; nothing was written.
    UpToDate(Vec<String>),
}

/// Files produced by a stage, keyed by path relative to the store root.
pub type Outputs = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    /// Reads an upstream artifact, naming `stage` when it is absent.
    pub fn read(&self, rel: &str, stage: &'static str) -> Result<Vec<u8>> {
        let path = self.path(rel);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact { path, stage },
            _ => e.into(),
        })
    }

    fn input_hash(&self, input: &Input) -> Result<(String, String)> {
        match input {
            Input::Artifact { path, stage } => Ok((path.clone(), sha256_hex(&self.read(path, stage)?))),
            Input::External(p) => {
                let bytes =
                    fs::read(p).map_err(|e| Error::Config(format!("cannot read input {}: {e}", p.display())))?;
                let name = p
                    .file_name()
                    .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                Ok((format!("external:{name}"), sha256_hex(&bytes)))
            }
        }
    }

    fn manifest(&self, stage: &str) -> Option<Manifest> {
        let bytes = fs::read(self.path(&format!("{MANIFEST_DIR}/{stage}.json"))).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn up_to_date(&self, m: &Manifest, fingerprint: &str) -> bool {
        m.fingerprint == fingerprint
            && m.outputs.iter().all(|(rel, hash)| {
                fs::read(self.path(rel)).is_ok_and(|b| sha256_hex(&b) == *hash)
                    && self.path(&format!("{rel}.meta.json")).is_file()
            })
    }

    fn write_atomic(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Runs `body` unless the stage's fingerprint (its config keys plus the
    /// content of its inputs) matches the last successful run and every
    /// recorded output is intact.
    pub fn run_stage<F>(
        &self,
        cfg: &PipelineConfig,
        stage: &str,
        keys: &[&str],
        inputs: &[Input],
        body: F,
    ) -> Result<StageStatus>
    where
        F: FnOnce() -> Result<Outputs>,
    {
        let input_hashes: BTreeMap<String, String> =
            inputs.iter().map(|i| self.input_hash(i)).collect::<Result<_>>()?;
        let stage_config_hash = cfg.hash_of(Some(keys));
        let mut h = Sha256::new();
        h.update(format!("{stage}\n{}\n{stage_config_hash}\n", env!("CARGO_PKG_VERSION")));
        for (k, v) in &input_hashes {
            h.update(format!("{k}={v}\n"));
        }
        let fingerprint = hex::encode(h.finalize());

        let previous = self.manifest(stage);
        if let Some(m) = &previous {
            if self.up_to_date(m, &fingerprint) {
                log::info!("{stage}: up to date");
                return Ok(StageStatus::UpToDate(m.outputs.keys().cloned().collect()));
            }
        }
        let outputs = body()?;
        if let Some(m) = previous {
            for rel in m.outputs.keys().filter(|r| !outputs.contains_key(*r)) {
                let _ = fs::remove_file(self.path(rel));
                let _ = fs::remove_file(self.path(&format!("{rel}.meta.json")));
            }
        }
        let config_hash = cfg.hash_of(None);
        // Paths are left out so that runs in different directories agree; the
        // inputs are pinned by content hash instead.
        let config: BTreeMap<String, String> = cfg
            .echo()
            .into_iter()
            .filter(|(k, _)| !matches!(*k, "events" | "matches" | "output_dir"))
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let mut recorded = BTreeMap::new();
        for (rel, bytes) in &outputs {
            let sha = sha256_hex(bytes);
            self.write_atomic(rel, bytes)?;
            let sidecar = Sidecar {
                stage: stage.to_string(),
                artifact: rel.clone(),
                sha256: sha.clone(),
                fingerprint: fingerprint.clone(),
                seed: cfg.seed,
                config_hash: config_hash.clone(),
                stage_config_hash: stage_config_hash.clone(),
                inputs: input_hashes.clone(),
                config: config.clone(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            };
            self.write_atomic(&format!("{rel}.meta.json"), &to_json_bytes(&sidecar)?)?;
            recorded.insert(rel.clone(), sha);
        }
        let manifest = Manifest {
            stage: stage.to_string(),
            fingerprint,
            outputs: recorded,
        };
        self.write_atomic(&format!("{MANIFEST_DIR}/{stage}.json"), &to_json_bytes(&manifest)?)?;
        log::info!("{stage}: wrote {} artifacts", outputs.len());
        Ok(StageStatus::Ran(outputs.into_keys().collect()))
    }
}

pub fn to_json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &Path) -> PipelineConfig {
        PipelineConfig::parse("events = e\nmatches = m\noutput_dir = out\n", dir).unwrap()
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = PipelineLock::acquire(dir.path()).unwrap();
        assert!(matches!(PipelineLock::acquire(dir.path()), Err(Error::LockHeld(_))));
        drop(lock);
        PipelineLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn unchanged_stage_is_skipped_and_tampering_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let c = cfg(dir.path());
        let mut runs = 0;
        let mut go = |value: &str| {
            store
                .run_stage(&c, "demo", &["seed"], &[], || {
                    runs += 1;
                    Ok(Outputs::from([("demo/a.txt".to_string(), value.as_bytes().to_vec())]))
                })
                .unwrap()
        };
        assert!(matches!(go("x"), StageStatus::Ran(_)));
        assert!(matches!(go("x"), StageStatus::UpToDate(_)));
        fs::write(dir.path().join("demo/a.txt"), "tampered").unwrap();
        assert!(matches!(go("x"), StageStatus::Ran(_)));
        assert_eq!(runs, 2);
        let meta: Sidecar =
            serde_json::from_slice(&fs::read(dir.path().join("demo/a.txt.meta.json")).unwrap()).unwrap();
        assert_eq!(meta.seed, 42);
        assert_eq!(meta.sha256, sha256_hex(b"x"));
    }

    #[test]
    fn missing_upstream_names_its_stage() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let err = store
            .run_stage(
                &cfg(dir.path()),
                "late",
                &[],
                &[Input::artifact("early/x.csv", "early")],
                || Ok(Outputs::new()),
            )
            .unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { stage: "early", .. }));
    }
}
