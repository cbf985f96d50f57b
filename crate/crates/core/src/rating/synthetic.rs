use std::collections::BTreeMap;

use chrono::DateTime;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::assign::RunRef;
use super::log::RecordEvent;
use super::{Choice, ComparisonResponse, ComparisonTask, Position};
use crate::analysis::simulate_comparisons;
use crate::corpus::{ConstitutionId, DimensionId, VignetteId};

/// Parameters for a simulated rating study over four constitutions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub runs: Vec<RunRef>,
    pub dimensions: Vec<DimensionId>,
    /// True strengths of the four constitutions.
    pub beta: Vec<(ConstitutionId, f64)>,
    /// Participants shown each matching: `{01, 23}`, `{02, 13}`, `{03, 12}`
    /// in `beta` order.
    pub participants_per_matching: [usize; 3],
    pub seed: u64,
}

const MATCHINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

/// Index of the unordered pair `(a, b)`, `a < b`, in
/// [`simulate_comparisons`] output order.
fn pair_slot(a: usize, b: usize, n: usize) -> usize {
    (0..a).map(|i| n - 1 - i).sum::<usize>() + (b - a - 1)
}

/// A complete, exclusion-free record log whose choices are Bradley-Terry
/// outcomes drawn from `design.beta`: every participant answers both tasks
/// and passes every comprehension check, so each dimension receives two
/// comparisons per participant.
pub fn synthetic_record_log(design: &SyntheticDesign) -> Vec<RecordEvent> {
    assert_eq!(design.beta.len(), 4, "synthetic design needs four constitutions");
    let n = design.beta.len();
    let per_pair = design.participants_per_matching.iter().copied().max().unwrap_or(0);
    let draws: Vec<Vec<(ConstitutionId, ConstitutionId)>> = (0..design.dimensions.len())
        .map(|d| simulate_comparisons(&design.beta, per_pair, design.seed.wrapping_add(1 + d as u64)))
        .collect();
    // outcomes[d][slot][k]: the k-th comparison of a pair on dimension d
    let outcomes: Vec<Vec<&[(ConstitutionId, ConstitutionId)]>> =
        draws.iter().map(|d| d.chunks(per_pair.max(1)).collect()).collect();

    let mut by_cell: BTreeMap<(ConstitutionId, VignetteId), &RunRef> = BTreeMap::new();
    for r in &design.runs {
        by_cell.entry((r.constitution_id.clone(), r.vignette_id.clone())).or_insert(r);
    }
    let vignettes: Vec<VignetteId> = {
        let mut v: Vec<VignetteId> = design.runs.iter().map(|r| r.vignette_id.clone()).collect();
        v.sort();
        v.dedup();
        v
    };

    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut events = Vec::new();
    let mut p = 0i64;
    for (m, &count) in design.participants_per_matching.iter().enumerate() {
        for k in 0..count {
            p += 1;
            let participant_id = format!("s{p:05}");
            let at = DateTime::from_timestamp(1_700_000_000 + 60 * p, 0).expect("valid timestamp");
            events.push(RecordEvent::Enrolled { participant_id: participant_id.clone(), enrolled_at: at });
            let mut responses = Vec::new();
            for (t, &(a, b)) in MATCHINGS[m].iter().enumerate() {
                let (ca, cb) = (&design.beta[a].0, &design.beta[b].0);
                let shared: Vec<&VignetteId> = vignettes
                    .iter()
                    .filter(|v| by_cell.contains_key(&(ca.clone(), (*v).clone())) && by_cell.contains_key(&(cb.clone(), (*v).clone())))
                    .collect();
                let v = (*shared.choose(&mut rng).expect("pair shares a vignette")).clone();
                let (ra, rb) = (by_cell[&(ca.clone(), v.clone())], by_cell[&(cb.clone(), v.clone())]);
                let order_seed: u64 = rng.random();
                let (left, right) = if order_seed % 2 == 1 { (rb, ra) } else { (ra, rb) };
                let task = ComparisonTask {
                    task_id: format!("{participant_id}-{}", t + 1),
                    participant_id: participant_id.clone(),
                    position: if t == 0 { Position::First } else { Position::Second },
                    left_run_id: left.run_id.clone(),
                    right_run_id: right.run_id.clone(),
                    left_constitution: left.constitution_id.clone(),
                    right_constitution: right.constitution_id.clone(),
                    left_vignette: left.vignette_id.clone(),
                    right_vignette: right.vignette_id.clone(),
                    left_right_order_seed: order_seed,
                };
                let slot = pair_slot(a, b, n);
                let choices = design
                    .dimensions
                    .iter()
                    .enumerate()
                    .map(|(d, dim)| {
                        let winner = &outcomes[d][slot][k].0;
                        let choice = if *winner == task.left_constitution { Choice::Left } else { Choice::Right };
                        (dim.clone(), choice)
                    })
                    .collect();
                responses.push(ComparisonResponse {
                    task_id: task.task_id.clone(),
                    choices,
                    comprehension_results: [true, true],
                    submitted_at: at + chrono::Duration::seconds(10 * (t as i64 + 1)),
                });
                events.push(RecordEvent::Assigned { task });
            }
            events.extend(responses.into_iter().map(|response| RecordEvent::Responded { response }));
        }
    }
    events
}
