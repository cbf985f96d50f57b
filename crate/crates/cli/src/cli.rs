use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use consteval::agents::{BackendMode, LiveAdapter};

use crate::config::{load_config, parse_enum, Keys};

#[derive(Debug, Parser)]
#[command(name = "consteval", version, about = "Compare critic constitutions on simulated doctor-patient interviews")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one dialogue run per (vignette, constitution) cell.
    Generate(GenerateArgs),
    /// Serve the rating API over a generated suite.
    Serve(ServeArgs),
    /// Fit Bradley-Terry models to a record log.
    Analyze(AnalyzeArgs),
    /// Write a synthetic record log from known strengths.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::Serve(_) => "serve",
            Self::Analyze(_) => "analyze",
            Self::Simulate(_) => "simulate",
        }
    }

    fn keys(&self) -> Keys {
        match self {
            Self::Generate(a) => a.keys(),
            Self::Serve(a) => a.keys(),
            Self::Analyze(a) => a.keys(),
            Self::Simulate(a) => a.keys(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `live` or `scripted` [default: scripted]
    #[arg(long, value_parser = parse_enum::<BackendMode>)]
    pub backend: Option<BackendMode>,
    /// Script file for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// `generic`, `anthropic` or `open_ai_chat` [default: generic]
    #[arg(long, value_parser = parse_enum::<LiveAdapter>)]
    pub adapter: Option<LiveAdapter>,
    /// Name of the environment variable holding the API credential.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// [default: 1.0]
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// [default: 1]
    #[arg(long)]
    pub critic_rounds: Option<u32>,
    /// [default: 20]
    #[arg(long)]
    pub max_turns: Option<usize>,
    #[arg(long)]
    pub max_regenerations: Option<u32>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Output directory [default: suite]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateArgs {
    fn keys(&self) -> Keys {
        Keys {
            corpus: self.corpus.clone(),
            backend: self.backend,
            script: self.script.clone(),
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            adapter: self.adapter,
            api_key_env: self.api_key_env.clone(),
            temperature: self.temperature,
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            critic_rounds: self.critic_rounds,
            max_turns: self.max_turns,
            max_regenerations: self.max_regenerations,
            parallelism: self.parallelism,
            out: self.out.clone(),
            ..Keys::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Suite directory written by `generate` [default: suite]
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Corpus directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// [default: 127.0.0.1:8080]
    #[arg(long)]
    pub bind: Option<String>,
    /// Append-only record log [default: records.jsonl]
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Assignment seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow the two dialogues of a task to come from different vignettes.
    #[arg(long)]
    pub cross_vignette: bool,
    /// Environment variable holding the admin bearer token [default: CONSTEVAL_ADMIN_TOKEN]
    #[arg(long)]
    pub admin_token_env: Option<String>,
}

impl ServeArgs {
    fn keys(&self) -> Keys {
        Keys {
            suite: self.suite.clone(),
            corpus: self.corpus.clone(),
            bind: self.bind.clone(),
            records: self.records.clone(),
            seed: self.seed,
            cross_vignette: self.cross_vignette.then_some(true),
            admin_token_env: self.admin_token_env.clone(),
            ..Keys::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// [default: records.jsonl]
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Output directory [default: results]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Constitution fixed at zero [default: none]
    #[arg(long)]
    pub reference: Option<String>,
    /// Only comparisons between two dialogues of this vignette.
    #[arg(long)]
    pub vignette: Option<String>,
}

impl AnalyzeArgs {
    fn keys(&self) -> Keys {
        Keys {
            records: self.records.clone(),
            out: self.out.clone(),
            reference: self.reference.clone(),
            vignette: self.vignette.clone(),
            ..Keys::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// True strengths, e.g. `none=0,doctor=0.5,empathetic=1,best_practices=1.5`.
    #[arg(long)]
    pub beta: Option<String>,
    /// Total participants [default: 200]
    #[arg(long)]
    pub participants: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: records.jsonl]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    fn keys(&self) -> Keys {
        Keys {
            corpus: self.corpus.clone(),
            beta: self.beta.clone(),
            participants: self.participants,
            seed: self.seed,
            out: self.out.clone(),
            ..Keys::default()
        }
    }
}

impl Cli {
    /// Flags over the config file.
    pub fn resolved_keys(&self) -> anyhow::Result<Keys> {
        let file = match &self.config {
            Some(path) => load_config(path, self.command.name())?,
            None => Keys::default(),
        };
        Ok(self.command.keys().or(file))
    }
}
