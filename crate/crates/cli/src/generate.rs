use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use chrono::{DateTime, Utc};
use consteval::agents::{build_backend, BackendConfig, BackendMode};
use consteval::corpus::load_corpus;
use consteval::engine::{generate_suite, EngineConfig, KeywordScreen};
use consteval::manifest::{corpus_digest, write_suite, RunManifest};

use crate::config::Keys;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub corpus: PathBuf,
    pub backend: BackendConfig,
    pub engine: EngineConfig,
    pub out: PathBuf,
    /// Manifest timestamp; defaults to `SOURCE_DATE_EPOCH` when set, else now.
    pub created_at: Option<DateTime<Utc>>,
}

impl GenerateOptions {
    pub fn from_keys(k: Keys) -> anyhow::Result<Self> {
        let defaults = BackendConfig::default();
        let mode = k.backend.unwrap_or(BackendMode::Scripted);
        let backend = BackendConfig {
            mode,
            endpoint: k.endpoint,
            model_name: k.model,
            temperature: k.temperature.unwrap_or(defaults.temperature),
            timeout: k.timeout_secs.map(Duration::from_secs).unwrap_or(defaults.timeout),
            max_retries: k.max_retries.unwrap_or(defaults.max_retries),
            script_path: k.script,
            api_key_env: k.api_key_env,
            adapter: k.adapter.unwrap_or(defaults.adapter),
            ..defaults
        };
        let d = EngineConfig::default();
        let engine = EngineConfig {
            critic_rounds: k.critic_rounds.unwrap_or(d.critic_rounds),
            max_turns_per_conversation: k.max_turns.unwrap_or(d.max_turns_per_conversation),
            max_regenerations: k.max_regenerations.unwrap_or(d.max_regenerations),
            parallelism: k.parallelism.unwrap_or(d.parallelism),
            ..d
        };
        engine.validate()?;
        backend.validate()?;
        Ok(Self {
            corpus: k.corpus.unwrap_or_else(|| "corpus".into()),
            backend,
            engine,
            out: k.out.unwrap_or_else(|| "suite".into()),
            created_at: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
}

fn creation_time() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::from_timestamp(s, 0))
        .unwrap_or_else(Utc::now)
}

/// Generates one run per (vignette, constitution) cell and writes the suite.
/// Nothing is written unless every cell succeeds.
pub fn cmd_generate(opts: &GenerateOptions) -> anyhow::Result<GenerateReport> {
    opts.engine.validate()?;
    let corpus = load_corpus(&opts.corpus).with_context(|| format!("cannot load corpus {}", opts.corpus.display()))?;
    let digest = corpus_digest(&opts.corpus)?;
    let backend = build_backend(&opts.backend)?;
    tracing::info!(
        mode = %opts.backend.mode,
        cells = corpus.vignettes.len() * corpus.constitutions.len(),
        critic_rounds = opts.engine.critic_rounds,
        "generating suite"
    );
    let runs = match generate_suite(&corpus, backend.as_ref(), &opts.engine, &KeywordScreen) {
        Ok(runs) => runs,
        Err(e) => {
            if let Some(partial) = e.partial_transcript() {
                tracing::error!(turns = partial.len(), "generation stopped mid-conversation");
            }
            return Err(anyhow::Error::new(e).context("suite generation failed"));
        }
    };
    let mut manifest =
        RunManifest::new(digest, opts.engine.clone(), &opts.backend, &runs, opts.created_at.unwrap_or_else(creation_time));
    manifest.corpus_path = Some(opts.corpus.display().to_string());
    let files = write_suite(&opts.out, &runs, &manifest)?;
    for run in &runs {
        tracing::info!(run = %run.run_id, regenerations = run.regeneration_count, "run written");
    }
    tracing::info!(out = %opts.out.display(), files = files.len(), "suite written");
    Ok(GenerateReport { manifest, files })
}
