use rayon::prelude::*;

use super::fidelity::{validate_patient_fidelity, FidelityValidator};
use super::run::{run_dialogue, FirstTurnCache};
use super::{DialogueRun, EngineConfig, EngineError, Validation};
use crate::agents::TextBackend;
use crate::corpus::{Constitution, Corpus, Vignette};

/// Generates one run and regenerates it until it validates or the
/// regeneration budget is spent. The cache is only updated from a run that
/// validates.
fn run_cell(
    vignette: &Vignette,
    constitution: &Constitution,
    backend: &dyn TextBackend,
    cfg: &EngineConfig,
    validator: &dyn FidelityValidator,
    cache: &mut FirstTurnCache,
) -> Result<DialogueRun, EngineError> {
    let cell_error = |source: EngineError| EngineError::Cell {
        vignette: vignette.id.to_string(),
        constitution: constitution.id.to_string(),
        source: Box::new(source),
    };
    let mut reason = String::new();
    for attempt in 0..=cfg.max_regenerations {
        let mut trial_cache = cache.clone();
        let mut run = run_dialogue(vignette, constitution, backend, cfg, &mut trial_cache, attempt).map_err(cell_error)?;
        match validate_patient_fidelity(&mut run, vignette, validator) {
            Validation::Valid => {
                run.regeneration_count = attempt;
                *cache = trial_cache;
                return Ok(run);
            }
            _ => {
                reason = run.validation_notes.join("; ");
                tracing::info!(run = %run.run_id, attempt, %reason, "run failed patient validation; regenerating");
            }
        }
    }
    Err(EngineError::RegenerationBudget {
        vignette: vignette.id.to_string(),
        constitution: constitution.id.to_string(),
        attempts: cfg.max_regenerations + 1,
        reason,
    })
}

/// Produces one valid run per (vignette, constitution) cell, in corpus order.
///
/// When the first patient turn is reused, the first cell of every vignette
/// runs alone to fill the cache before the remaining cells fan out across at
/// most `cfg.parallelism` threads.
pub fn generate_suite(
    corpus: &Corpus,
    backend: &dyn TextBackend,
    cfg: &EngineConfig,
    validator: &dyn FidelityValidator,
) -> Result<Vec<DialogueRun>, EngineError> {
    cfg.validate()?;
    let cells: Vec<(&Vignette, &Constitution)> = corpus
        .vignettes
        .iter()
        .flat_map(|v| corpus.constitutions.iter().map(move |c| (v, c)))
        .collect();

    let mut cache = FirstTurnCache::default();
    let mut done: Vec<Option<DialogueRun>> = vec![None; cells.len()];
    if cfg.reuse_first_patient_turn {
        for (idx, (v, c)) in cells.iter().enumerate() {
            if !cache.contains(&v.id) {
                done[idx] = Some(run_cell(v, c, backend, cfg, validator, &mut cache)?);
            }
        }
    }

    let pending: Vec<usize> = (0..cells.len()).filter(|&i| done[i].is_none()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(usize, DialogueRun)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&idx| {
                let (v, c) = cells[idx];
                let mut local = cache.clone();
                run_cell(v, c, backend, cfg, validator, &mut local).map(|run| (idx, run))
            })
            .collect::<Result<_, _>>()
    })?;
    for (idx, run) in results {
        done[idx] = Some(run);
    }
    Ok(done.into_iter().map(|r| r.expect("every cell generated")).collect())
}
