use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ComparisonTask, Position};
use crate::corpus::{ConstitutionId, VignetteId};
use crate::engine::DialogueRun;

/// The parts of a run that assignment needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRef {
    pub run_id: String,
    pub vignette_id: VignetteId,
    pub constitution_id: ConstitutionId,
}

impl From<&DialogueRun> for RunRef {
    fn from(run: &DialogueRun) -> Self {
        Self {
            run_id: run.run_id.clone(),
            vignette_id: run.vignette_id.clone(),
            constitution_id: run.constitution_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignOptions {
    /// Allow the two dialogues of a task to come from different vignettes.
    pub cross_vignette: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssignError {
    #[error("suite must cover exactly four constitutions, found {0:?}")]
    Coverage(Vec<ConstitutionId>),
    #[error("no vignette has runs for both `{0}` and `{1}`")]
    NoSharedVignette(ConstitutionId, ConstitutionId),
}

/// The three ways of splitting four items into two pairs, by position in
/// sorted order.
const MATCHINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

fn pick<'a, R: Rng>(rng: &mut R, runs: &[&'a RunRef]) -> &'a RunRef {
    runs.choose(rng).expect("non-empty candidate list")
}

/// Draws a participant's two tasks: a uniform perfect matching of the four
/// constitutions, the pair order, a run per constitution and each task's
/// left/right order. Deterministic given `seed`.
pub fn assign_tasks(
    participant_id: &str,
    suite: &[RunRef],
    seed: u64,
    opts: &AssignOptions,
) -> Result<[ComparisonTask; 2], AssignError> {
    let constitutions: Vec<ConstitutionId> =
        suite.iter().map(|r| r.constitution_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if constitutions.len() != 4 {
        return Err(AssignError::Coverage(constitutions));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = MATCHINGS[rng.random_range(0..3)];
    if rng.random::<bool>() {
        pairs.swap(0, 1);
    }

    let runs_of = |c: &ConstitutionId, v: Option<&VignetteId>| -> Vec<&RunRef> {
        suite.iter().filter(|r| &r.constitution_id == c && v.is_none_or(|v| &r.vignette_id == v)).collect()
    };

    let mut tasks = Vec::with_capacity(2);
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        let (ca, cb) = (&constitutions[a], &constitutions[b]);
        let (ra, rb) = if opts.cross_vignette {
            (pick(&mut rng, &runs_of(ca, None)), pick(&mut rng, &runs_of(cb, None)))
        } else {
            let shared: Vec<VignetteId> = suite
                .iter()
                .filter(|r| &r.constitution_id == ca)
                .map(|r| r.vignette_id.clone())
                .filter(|v| suite.iter().any(|r| &r.constitution_id == cb && &r.vignette_id == v))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let v = shared.choose(&mut rng).ok_or_else(|| AssignError::NoSharedVignette(ca.clone(), cb.clone()))?;
            (pick(&mut rng, &runs_of(ca, Some(v))), pick(&mut rng, &runs_of(cb, Some(v))))
        };
        let order_seed = rng.random::<u64>();
        let (left, right) = if order_seed % 2 == 1 { (rb, ra) } else { (ra, rb) };
        let position = if k == 0 { Position::First } else { Position::Second };
        tasks.push(ComparisonTask {
            task_id: format!("{participant_id}-{}", k + 1),
            participant_id: participant_id.to_owned(),
            position,
            left_run_id: left.run_id.clone(),
            right_run_id: right.run_id.clone(),
            left_constitution: left.constitution_id.clone(),
            right_constitution: right.constitution_id.clone(),
            left_vignette: left.vignette_id.clone(),
            right_vignette: right.vignette_id.clone(),
            left_right_order_seed: order_seed,
        });
    }
    Ok(tasks.try_into().expect("two tasks"))
}

/// Which of the three matchings a pair of tasks realises (0: the smallest
/// constitution id is paired with the second smallest, 1: with the third,
/// 2: with the fourth). `None` if the tasks do not form a perfect matching.
pub fn matching_index(tasks: &[ComparisonTask; 2]) -> Option<usize> {
    let all: BTreeSet<&ConstitutionId> =
        tasks.iter().flat_map(|t| [&t.left_constitution, &t.right_constitution]).collect();
    if all.len() != 4 {
        return None;
    }
    let sorted: Vec<&ConstitutionId> = all.into_iter().collect();
    let partner = tasks.iter().find_map(|t| {
        if t.left_constitution == *sorted[0] {
            Some(&t.right_constitution)
        } else if t.right_constitution == *sorted[0] {
            Some(&t.left_constitution)
        } else {
            None
        }
    })?;
    sorted.iter().position(|c| *c == partner).map(|p| p - 1)
}
