//! Suite output: one JSON file per run plus a manifest tying the runs to the
//! corpus and configuration that produced them.
//!
//! ```text
//! <out>/manifest.json
//! <out>/runs/<vignette>__<constitution>.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{BackendConfig, BackendMode};
use crate::engine::{DialogueRun, EngineConfig, Validation};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Directory holding the run files, relative to the manifest.
    pub suite_path: String,
    /// Corpus directory as given at generation time.
    #[serde(default)]
    pub corpus_path: Option<String>,
    pub corpus_digest: String,
    pub engine_config: EngineConfig,
    pub config_digest: String,
    pub backend_mode: BackendMode,
    pub run_ids: Vec<String>,
    pub created_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn new(
        corpus_digest: String,
        engine_config: EngineConfig,
        backend: &BackendConfig,
        runs: &[DialogueRun],
        created_at: DateTime<Utc>,
    ) -> Self {
        Self {
            suite_path: RUNS_DIR.to_owned(),
            corpus_path: None,
            config_digest: config_digest(&engine_config, backend),
            corpus_digest,
            engine_config,
            backend_mode: backend.mode,
            run_ids: runs.iter().map(|r| r.run_id.clone()).collect(),
            created_at,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("corpus digest mismatch: suite was generated from {expected}, corpus is now {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("suite is corrupt: {0}")]
    Corrupt(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io { path: path.to_owned(), source }
}

/// Hex SHA-256 of the engine and backend settings that shape generation.
pub fn config_digest(engine: &EngineConfig, backend: &BackendConfig) -> String {
    let value = serde_json::json!({
        "engine": engine,
        "backend": {
            "mode": backend.mode,
            "model": backend.model_name,
            "temperature": backend.temperature,
            "adapter": backend.adapter,
            "max_tokens": backend.max_tokens,
        },
    });
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), SuiteError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hex SHA-256 over every file under the corpus root, in path order.
pub fn corpus_digest(root: &Path) -> Result<String, SuiteError> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn run_file_name(run: &DialogueRun) -> String {
    format!("{}.json", run.run_id)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    text
}

/// Writes every run and the manifest, returning the run file paths.
pub fn write_suite(out_dir: &Path, runs: &[DialogueRun], manifest: &RunManifest) -> Result<Vec<PathBuf>, SuiteError> {
    let runs_dir = out_dir.join(&manifest.suite_path);
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let mut paths = Vec::with_capacity(runs.len());
    for run in runs {
        let path = runs_dir.join(run_file_name(run));
        fs::write(&path, to_json(run)).map_err(io_err(&path))?;
        paths.push(path);
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, to_json(manifest)).map_err(io_err(&manifest_path))?;
    Ok(paths)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SuiteError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| SuiteError::Json { path: path.to_owned(), source })
}

/// Reads a suite written by [`write_suite`], checking that every listed run
/// is present, valid and consistent with its file name.
pub fn load_suite(dir: &Path) -> Result<(RunManifest, Vec<DialogueRun>), SuiteError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let mut runs = Vec::with_capacity(manifest.run_ids.len());
    for id in &manifest.run_ids {
        let path = dir.join(&manifest.suite_path).join(format!("{id}.json"));
        let run: DialogueRun = read_json(&path)?;
        if &run.run_id != id {
            return Err(SuiteError::Corrupt(format!("{} holds run `{}`", path.display(), run.run_id)));
        }
        if run.validation != Validation::Valid {
            return Err(SuiteError::Corrupt(format!("run `{id}` is not validated")));
        }
        runs.push(run);
    }
    Ok((manifest, runs))
}

/// Refuses a corpus whose contents changed since the suite was generated.
pub fn verify_corpus(manifest: &RunManifest, corpus_root: &Path) -> Result<(), SuiteError> {
    let actual = corpus_digest(corpus_root)?;
    if actual != manifest.corpus_digest {
        return Err(SuiteError::DigestMismatch { expected: manifest.corpus_digest.clone(), actual });
    }
    Ok(())
}
