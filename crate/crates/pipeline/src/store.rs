//! On-disk run store.
//!
//! ```text
//! <root>/datasets/<sha256>.csv         submitted transaction logs
//! <root>/stages/<stage>/<fingerprint>/ one directory per computed stage
//! <root>/runs/<run_id>/manifest.json   config, stage fingerprints, status
//! ```
//!
//! Stage directories are keyed by the chained stage fingerprint, so any
//! run whose upstream configuration matches reuses them. Every file is
//! written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Stage};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().context("path has no parent directory")?;
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Pending,
    Running,
    /// Computed by this run.
    Done,
    /// Found in the store under the same fingerprint.
    Reused,
    Failed,
}

impl StageState {
    pub fn finished(self) -> bool {
        matches!(self, StageState::Done | StageState::Reused)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub fingerprint: String,
    pub state: StageState,
    /// Wall time of the computation; for reused stages, of the original one.
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub parent: Option<String>,
    pub dataset: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub config: RunConfig,
    pub state: RunState,
    pub stages: Vec<StageRecord>,
    pub error: Option<RunFailure>,
}

impl Manifest {
    pub fn new(dataset: &str, config: RunConfig, parent: Option<String>) -> Manifest {
        let config_fingerprint = tempseg_core::fingerprint(&config);
        let run_id = tempseg_core::fingerprint(&(dataset, &config_fingerprint))[..16].to_string();
        let stages = config
            .stage_fingerprints(dataset)
            .into_iter()
            .map(|(stage, fingerprint)| StageRecord { stage, fingerprint, state: StageState::Pending, seconds: None })
            .collect();
        Manifest {
            run_id,
            parent,
            dataset: dataset.to_string(),
            seed: config.seed,
            config_fingerprint,
            config,
            state: RunState::Queued,
            stages,
            error: None,
        }
    }

    pub fn record(&self, stage: Stage) -> &StageRecord {
        self.stages.iter().find(|r| r.stage == stage).expect("every stage recorded")
    }

    pub fn record_mut(&mut self, stage: Stage) -> &mut StageRecord {
        self.stages.iter_mut().find(|r| r.stage == stage).expect("every stage recorded")
    }

    pub fn completed_stages(&self) -> usize {
        self.stages.iter().filter(|r| r.state.finished()).count()
    }
}

/// Timing stored next to a stage's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageMeta {
    stage: Stage,
    fingerprint: String,
    seconds: f64,
    files: Vec<String>,
}

const STAGE_META: &str = "stage.json";

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> anyhow::Result<RunStore> {
        let root = root.into();
        for sub in ["datasets", "stages", "runs"] {
            std::fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores a transaction log under its content hash.
    pub fn put_dataset(&self, bytes: &[u8]) -> anyhow::Result<String> {
        let id = sha256_hex(bytes);
        let path = self.dataset_path(&id);
        if !path.exists() {
            atomic_write(&path, bytes)?;
        }
        Ok(id)
    }

    pub fn dataset_path(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.csv"))
    }

    pub fn read_dataset(&self, id: &str) -> anyhow::Result<Vec<u8>> {
        check_id(id)?;
        std::fs::read(self.dataset_path(id)).with_context(|| format!("unknown dataset {id}"))
    }

    pub fn has_dataset(&self, id: &str) -> bool {
        check_id(id).is_ok() && self.dataset_path(id).exists()
    }

    pub fn stage_dir(&self, stage: Stage, fingerprint: &str) -> PathBuf {
        self.root.join("stages").join(stage.name()).join(fingerprint)
    }

    /// Seconds the stage originally took, when it is in the store.
    pub fn stage_seconds(&self, stage: Stage, fingerprint: &str) -> Option<f64> {
        let text = std::fs::read(self.stage_dir(stage, fingerprint).join(STAGE_META)).ok()?;
        serde_json::from_slice::<StageMeta>(&text).ok().map(|m| m.seconds)
    }

    pub fn has_stage(&self, stage: Stage, fingerprint: &str) -> bool {
        self.stage_dir(stage, fingerprint).join(STAGE_META).exists()
    }

    /// Writes all files of a stage into a temporary directory and renames
    /// it into place. A concurrent writer of the same fingerprint produced
    /// identical content, so losing the rename race is harmless.
    pub fn commit_stage(&self, stage: Stage, fingerprint: &str, seconds: f64, files: &[(String, Vec<u8>)]) -> anyhow::Result<()> {
        let parent = self.root.join("stages").join(stage.name());
        std::fs::create_dir_all(&parent)?;
        let tmp = tempfile::Builder::new().prefix(".tmp-").tempdir_in(&parent)?;
        for (name, bytes) in files {
            std::fs::write(tmp.path().join(name), bytes)?;
        }
        let meta = StageMeta {
            stage,
            fingerprint: fingerprint.to_string(),
            seconds,
            files: files.iter().map(|(n, _)| n.clone()).collect(),
        };
        std::fs::write(tmp.path().join(STAGE_META), serde_json::to_vec_pretty(&meta)?)?;
        let tmp_path = tmp.keep();
        let target = self.stage_dir(stage, fingerprint);
        if let Err(e) = std::fs::rename(&tmp_path, &target) {
            let _ = std::fs::remove_dir_all(&tmp_path);
            if !self.has_stage(stage, fingerprint) {
                return Err(e).with_context(|| format!("committing {}", target.display()));
            }
        }
        Ok(())
    }

    pub fn read_stage_file(&self, stage: Stage, fingerprint: &str, name: &str) -> anyhow::Result<Vec<u8>> {
        if name.contains('/') || name.contains("..") {
            bail!("invalid file name {name:?}");
        }
        let path = self.stage_dir(stage, fingerprint).join(name);
        std::fs::read(&path).with_context(|| format!("reading {}", path.display()))
    }

    pub fn stage_files(&self, stage: Stage, fingerprint: &str) -> anyhow::Result<Vec<String>> {
        let meta: StageMeta = serde_json::from_slice(&self.read_stage_file(stage, fingerprint, STAGE_META)?)?;
        Ok(meta.files)
    }

    fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id).join("manifest.json")
    }

    pub fn save_manifest(&self, m: &Manifest) -> anyhow::Result<()> {
        atomic_write(&self.manifest_path(&m.run_id), &serde_json::to_vec_pretty(m)?)
    }

    pub fn manifest(&self, run_id: &str) -> anyhow::Result<Manifest> {
        check_id(run_id)?;
        let bytes = std::fs::read(self.manifest_path(run_id)).with_context(|| format!("unknown run {run_id}"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn has_run(&self, run_id: &str) -> bool {
        check_id(run_id).is_ok() && self.manifest_path(run_id).exists()
    }

    pub fn list_runs(&self) -> anyhow::Result<Vec<String>> {
        let mut ids: Vec<String> = std::fs::read_dir(self.root.join("runs"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("manifest.json").exists())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }
}

fn check_id(id: &str) -> anyhow::Result<()> {
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
        bail!("invalid id {id:?}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let a = store.put_dataset(b"x,y\n1,2\n").unwrap();
        let b = store.put_dataset(b"x,y\n1,2\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(store.read_dataset(&a).unwrap(), b"x,y\n1,2\n");
        assert!(store.read_dataset("../etc").is_err());
    }

    #[test]
    fn stage_commit_is_visible_only_when_complete() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        assert!(!store.has_stage(Stage::Cluster, "abc"));
        store.commit_stage(Stage::Cluster, "abc", 1.5, &[("grid.csv".into(), b"a,b\n".to_vec())]).unwrap();
        assert!(store.has_stage(Stage::Cluster, "abc"));
        assert_eq!(store.stage_seconds(Stage::Cluster, "abc"), Some(1.5));
        assert_eq!(store.stage_files(Stage::Cluster, "abc").unwrap(), vec!["grid.csv"]);
        // a second commit of the same fingerprint is a no-op
        store.commit_stage(Stage::Cluster, "abc", 9.0, &[("grid.csv".into(), b"a,b\n".to_vec())]).unwrap();
        assert_eq!(store.stage_seconds(Stage::Cluster, "abc"), Some(1.5));
        let leftovers = std::fs::read_dir(dir.path().join("stages/cluster")).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let m = Manifest::new("ab12", RunConfig::default(), None);
        store.save_manifest(&m).unwrap();
        assert_eq!(store.manifest(&m.run_id).unwrap(), m);
        assert_eq!(store.list_runs().unwrap(), vec![m.run_id.clone()]);
        assert_eq!(Manifest::new("ab12", RunConfig::default(), None).run_id, m.run_id);
    }
}
