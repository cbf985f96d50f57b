use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use consteval::corpus::load_corpus;
use consteval::manifest::{load_suite, verify_corpus};
use consteval::rating::{AssignOptions, EventCounts, RatingService, RecordStore};
use consteval_server::AppState;
use tokio::net::TcpListener;

use crate::config::Keys;

pub const DEFAULT_ADMIN_TOKEN_ENV: &str = "CONSTEVAL_ADMIN_TOKEN";

#[derive(Clone, PartialEq)]
pub struct ServeOptions {
    pub suite: PathBuf,
    /// Overrides the corpus path recorded in the manifest.
    pub corpus: Option<PathBuf>,
    pub bind: String,
    pub records: PathBuf,
    pub seed: u64,
    pub cross_vignette: bool,
    pub admin_token: Option<String>,
}

impl std::fmt::Debug for ServeOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServeOptions")
            .field("suite", &self.suite)
            .field("corpus", &self.corpus)
            .field("bind", &self.bind)
            .field("records", &self.records)
            .field("seed", &self.seed)
            .field("cross_vignette", &self.cross_vignette)
            .field("admin_token", &self.admin_token.as_ref().map(|_| "<set>"))
            .finish()
    }
}

impl ServeOptions {
    /// Reads the admin token from the variable named by `admin-token-env`.
    /// An unset or empty variable leaves export disabled.
    pub fn from_keys(k: Keys) -> anyhow::Result<Self> {
        let token_env = k.admin_token_env.unwrap_or_else(|| DEFAULT_ADMIN_TOKEN_ENV.to_owned());
        let admin_token = std::env::var(&token_env).ok().filter(|t| !t.is_empty());
        if admin_token.is_none() {
            tracing::warn!(variable = %token_env, "admin token variable unset; export is disabled");
        }
        let seed = k.seed.unwrap_or_else(|| {
            tracing::info!(seed = 0, "no seed given; using default");
            0
        });
        Ok(Self {
            suite: k.suite.unwrap_or_else(|| "suite".into()),
            corpus: k.corpus,
            bind: k.bind.unwrap_or_else(|| "127.0.0.1:8080".to_owned()),
            records: k.records.unwrap_or_else(|| "records.jsonl".into()),
            seed,
            cross_vignette: k.cross_vignette.unwrap_or(false),
            admin_token,
        })
    }
}

pub struct PreparedServer {
    pub state: Arc<AppState>,
    pub listener: TcpListener,
    pub addr: SocketAddr,
}

/// Loads and checks the suite, replays the record log and binds the socket.
pub async fn prepare_serve(opts: &ServeOptions) -> anyhow::Result<PreparedServer> {
    let (manifest, runs) = load_suite(&opts.suite).with_context(|| format!("cannot load suite {}", opts.suite.display()))?;
    let corpus_root = opts
        .corpus
        .clone()
        .or_else(|| manifest.corpus_path.as_ref().map(PathBuf::from))
        .context("manifest records no corpus path; pass --corpus")?;
    verify_corpus(&manifest, &corpus_root).context("refusing to serve")?;
    let corpus = load_corpus(&corpus_root).with_context(|| format!("cannot load corpus {}", corpus_root.display()))?;
    let store = RecordStore::open(&opts.records, corpus.dimension_ids())
        .with_context(|| format!("cannot open record log {}", opts.records.display()))?;
    let service = RatingService::new(
        runs,
        &corpus,
        store,
        opts.seed,
        AssignOptions { cross_vignette: opts.cross_vignette },
    )?;
    let counts = service.counts();
    tracing::info!(enrolled = counts.enrolled, assigned = counts.assigned, responded = counts.responded, "record log replayed");
    let listener = TcpListener::bind(&opts.bind).await.with_context(|| format!("cannot bind {}", opts.bind))?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, seed = opts.seed, runs = manifest.run_ids.len(), "serving");
    let state = Arc::new(AppState { service, admin_token: opts.admin_token.clone() });
    Ok(PreparedServer { state, listener, addr })
}

/// Serves until `shutdown` resolves and returns the final event counts.
pub async fn cmd_serve(opts: &ServeOptions, shutdown: impl Future<Output = ()> + Send + 'static) -> anyhow::Result<EventCounts> {
    let server = prepare_serve(opts).await?;
    run_prepared(server, shutdown).await
}

pub async fn run_prepared(
    server: PreparedServer,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<EventCounts> {
    consteval_server::serve(server.listener, server.state.clone(), shutdown).await?;
    let counts = server.state.service.counts();
    tracing::info!(enrolled = counts.enrolled, assigned = counts.assigned, responded = counts.responded, "shut down");
    Ok(counts)
}
