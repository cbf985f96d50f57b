use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use consteval::analysis::{fit_all_dimensions, AnalysisBundle, FitOptions};
use consteval::corpus::{ConstitutionId, DimensionId, VignetteId};
use consteval::rating::{apply_exclusions, extract_comparisons, group_by_dimension, ExclusionReport, RecordLog};
use serde::{Deserialize, Serialize};

use crate::config::Keys;

pub const RESULTS_FILE: &str = "results.json";
pub const PLOT_FILE: &str = "plot.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub records: PathBuf,
    pub out: PathBuf,
    pub reference: ConstitutionId,
    /// Keep only comparisons between two dialogues of this vignette.
    pub vignette: Option<VignetteId>,
    pub fit: FitOptions,
}

impl AnalyzeOptions {
    pub fn new(records: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            records: records.into(),
            out: out.into(),
            reference: ConstitutionId::new("none"),
            vignette: None,
            fit: FitOptions::default(),
        }
    }

    pub fn from_keys(k: Keys) -> anyhow::Result<Self> {
        let mut opts = Self::new(
            k.records.unwrap_or_else(|| "records.jsonl".into()),
            k.out.unwrap_or_else(|| "results".into()),
        );
        if let Some(r) = k.reference {
            opts.reference = ConstitutionId::new(r);
        }
        opts.vignette = k.vignette.map(VignetteId::new);
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub enrolled: usize,
    pub included: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub records: String,
    pub vignette: Option<VignetteId>,
    pub participants: ParticipantSummary,
    pub exclusions: Vec<ExclusionReport>,
    pub analysis: AnalysisBundle,
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub bundle: ResultsBundle,
    pub files: Vec<PathBuf>,
}

fn write(path: PathBuf, text: &str) -> anyhow::Result<PathBuf> {
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn summary_text(bundle: &ResultsBundle) -> String {
    let p = &bundle.participants;
    let mut out = String::new();
    writeln!(out, "records: {}", bundle.records).unwrap();
    if let Some(v) = &bundle.vignette {
        writeln!(out, "vignette: {v}").unwrap();
    }
    writeln!(out, "participants: {} enrolled, {} included, {} excluded", p.enrolled, p.included, p.excluded).unwrap();
    for r in &bundle.exclusions {
        writeln!(out, "  excluded {} ({:?}): {}", r.participant_id, r.rule, r.detail).unwrap();
    }
    writeln!(out, "reference: {}\n", bundle.analysis.reference).unwrap();
    out.push_str(&bundle.analysis.summary());
    out
}

fn display_path(p: &Path) -> String {
    p.display().to_string()
}

/// Applies exclusions, fits every dimension and writes `results.json`,
/// `plot.tsv` and `summary.txt` under `opts.out`.
pub fn cmd_analyze(opts: &AnalyzeOptions) -> anyhow::Result<AnalyzeReport> {
    let text = fs::read_to_string(&opts.records).with_context(|| format!("cannot read {}", opts.records.display()))?;
    let dimensions: Vec<DimensionId> = DimensionId::ALL.iter().map(|d| DimensionId::new(*d)).collect();
    let log = RecordLog::parse_jsonl(dimensions.clone(), &text)
        .with_context(|| format!("cannot parse {}", opts.records.display()))?;
    if log.participants.is_empty() {
        bail!("record log {} is empty", opts.records.display());
    }
    let exclusions = apply_exclusions(&log);
    if exclusions.included.is_empty() {
        bail!("no included participants: all {} were excluded", log.participants.len());
    }
    let mut comparisons = extract_comparisons(&log, &exclusions);
    if let Some(v) = &opts.vignette {
        comparisons.retain(|c| &c.winner_vignette == v && &c.loser_vignette == v);
    }
    let items: Vec<ConstitutionId> = log
        .tasks
        .values()
        .flat_map(|t| [t.left_constitution.clone(), t.right_constitution.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !items.contains(&opts.reference) {
        bail!("reference `{}` does not appear in any task", opts.reference);
    }
    let grouped = group_by_dimension(&comparisons, &dimensions);
    let analysis = fit_all_dimensions(&grouped, &items, &opts.reference, opts.fit);
    let bundle = ResultsBundle {
        records: display_path(&opts.records),
        vignette: opts.vignette.clone(),
        participants: ParticipantSummary {
            enrolled: log.participants.len(),
            included: exclusions.included.len(),
            excluded: log.participants.len() - exclusions.included.len(),
        },
        exclusions: exclusions.reports,
        analysis,
    };
    tracing::info!(
        included = bundle.participants.included,
        excluded = bundle.participants.excluded,
        comparisons = comparisons.len(),
        "fitted"
    );

    fs::create_dir_all(&opts.out).with_context(|| format!("cannot create {}", opts.out.display()))?;
    let mut json = serde_json::to_string_pretty(&bundle)?;
    json.push('\n');
    let files = vec![
        write(opts.out.join(RESULTS_FILE), &json)?,
        write(opts.out.join(PLOT_FILE), &bundle.analysis.plot_tsv())?,
        write(opts.out.join(SUMMARY_FILE), &summary_text(&bundle))?,
    ];
    Ok(AnalyzeReport { bundle, files })
}
