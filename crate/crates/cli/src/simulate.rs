use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use consteval::corpus::{load_corpus, ConstitutionId};
use consteval::engine::run_id;
use consteval::rating::{synthetic_record_log, RunRef, SyntheticDesign};

use crate::config::Keys;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub corpus: PathBuf,
    pub beta: Vec<(ConstitutionId, f64)>,
    /// Participants in total, split as evenly as possible over the three
    /// matchings.
    pub participants: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Parses `none=0,doctor=0.5,...`.
pub fn parse_beta(text: &str) -> anyhow::Result<Vec<(ConstitutionId, f64)>> {
    let beta = text
        .split(',')
        .map(|part| {
            let (id, value) = part.split_once('=').with_context(|| format!("expected id=value, got `{part}`"))?;
            let value: f64 = value.trim().parse().with_context(|| format!("bad strength in `{part}`"))?;
            Ok((ConstitutionId::new(id.trim()), value))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if beta.len() != 4 {
        bail!("expected four constitutions, got {}", beta.len());
    }
    Ok(beta)
}

impl SimulateOptions {
    pub fn from_keys(k: Keys) -> anyhow::Result<Self> {
        let beta = parse_beta(k.beta.as_deref().context("--beta is required")?)?;
        let seed = k.seed.unwrap_or_else(|| {
            tracing::info!(seed = 0, "no seed given; using default");
            0
        });
        Ok(Self {
            corpus: k.corpus.unwrap_or_else(|| "corpus".into()),
            beta,
            participants: k.participants.unwrap_or(200),
            seed,
            out: k.out.unwrap_or_else(|| "records.jsonl".into()),
        })
    }
}

pub fn split_participants(total: usize) -> [usize; 3] {
    let base = total / 3;
    let extra = total % 3;
    [0, 1, 2].map(|m| base + usize::from(m < extra))
}

/// Writes a complete synthetic record log whose choices follow `opts.beta`
/// and returns the number of events.
pub fn cmd_simulate(opts: &SimulateOptions) -> anyhow::Result<usize> {
    let corpus = load_corpus(&opts.corpus).with_context(|| format!("cannot load corpus {}", opts.corpus.display()))?;
    for (id, _) in &opts.beta {
        if corpus.constitution(id.as_str()).is_none() {
            bail!("corpus has no constitution `{id}`");
        }
    }
    let runs = corpus
        .vignettes
        .iter()
        .flat_map(|v| {
            corpus.constitutions.iter().map(move |c| RunRef {
                run_id: run_id(v.id.as_str(), c.id.as_str()),
                vignette_id: v.id.clone(),
                constitution_id: c.id.clone(),
            })
        })
        .collect();
    let design = SyntheticDesign {
        runs,
        dimensions: corpus.dimension_ids(),
        beta: opts.beta.clone(),
        participants_per_matching: split_participants(opts.participants),
        seed: opts.seed,
    };
    let events = synthetic_record_log(&design);
    let text: String = events.iter().map(|e| e.to_line()).collect();
    fs::write(&opts.out, text).with_context(|| format!("cannot write {}", opts.out.display()))?;
    tracing::info!(out = %opts.out.display(), participants = opts.participants, events = events.len(), "synthetic log written");
    Ok(events.len())
}
