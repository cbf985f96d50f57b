use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    Choice, ComparisonResponse, ComparisonTask, ExclusionReport, ExclusionRule, Participant, ParticipantStatus,
    RecordError,
};
use crate::analysis::Pair;
use crate::corpus::{ConstitutionId, DimensionId, VignetteId};

/// One line of the record log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RecordEvent {
    Enrolled { participant_id: String, enrolled_at: DateTime<Utc> },
    Assigned { task: ComparisonTask },
    Responded { response: ComparisonResponse },
}

impl RecordEvent {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("event serialises");
        line.push('\n');
        line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("record log line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

/// State replayed from the record log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecordLog {
    /// Keys every response must carry.
    pub dimensions: Vec<DimensionId>,
    pub participants: BTreeMap<String, Participant>,
    pub tasks: BTreeMap<String, ComparisonTask>,
    pub responses: BTreeMap<String, ComparisonResponse>,
}

impl RecordLog {
    pub fn new(dimensions: Vec<DimensionId>) -> Self {
        Self { dimensions, ..Self::default() }
    }

    pub fn tasks_of<'a>(&'a self, participant: &'a str) -> impl Iterator<Item = &'a ComparisonTask> + 'a {
        self.tasks.values().filter(move |t| t.participant_id == participant)
    }

    pub fn responses_of<'a>(&'a self, participant: &'a str) -> impl Iterator<Item = &'a ComparisonResponse> + 'a {
        self.tasks_of(participant).filter_map(|t| self.responses.get(&t.task_id))
    }

    pub fn validate_choices(&self, response: &ComparisonResponse) -> Result<(), RecordError> {
        let missing: Vec<&str> =
            self.dimensions.iter().filter(|d| !response.choices.contains_key(*d)).map(|d| d.as_str()).collect();
        if !missing.is_empty() {
            return Err(RecordError::Malformed(format!("missing dimensions: {}", missing.join(", "))));
        }
        let unknown: Vec<&str> =
            response.choices.keys().filter(|d| !self.dimensions.contains(d)).map(|d| d.as_str()).collect();
        if !unknown.is_empty() {
            return Err(RecordError::Malformed(format!("unknown dimensions: {}", unknown.join(", "))));
        }
        Ok(())
    }

    /// Whether `event` may be appended to the log in its current state.
    pub fn check(&self, event: &RecordEvent) -> Result<(), RecordError> {
        match event {
            RecordEvent::Enrolled { participant_id, .. } => {
                if self.participants.contains_key(participant_id) {
                    return Err(RecordError::DuplicateParticipant(participant_id.clone()));
                }
            }
            RecordEvent::Assigned { task } => {
                if !self.participants.contains_key(&task.participant_id) {
                    return Err(RecordError::UnknownParticipant(task.participant_id.clone()));
                }
                if self.tasks.contains_key(&task.task_id) {
                    return Err(RecordError::DuplicateTask(task.task_id.clone()));
                }
            }
            RecordEvent::Responded { response } => {
                let task = self
                    .tasks
                    .get(&response.task_id)
                    .ok_or_else(|| RecordError::UnknownTask(response.task_id.clone()))?;
                if self.responses.contains_key(&response.task_id) {
                    return Err(RecordError::Duplicate(response.task_id.clone()));
                }
                let participant = &self.participants[&task.participant_id];
                if participant.status != ParticipantStatus::Active {
                    return Err(RecordError::Inactive {
                        participant: participant.participant_id.clone(),
                        status: participant.status,
                    });
                }
                self.validate_choices(response)?;
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: RecordEvent) -> Result<(), RecordError> {
        self.check(&event)?;
        match event {
            RecordEvent::Enrolled { participant_id, enrolled_at } => {
                let p = Participant { participant_id: participant_id.clone(), enrolled_at, status: ParticipantStatus::Active };
                self.participants.insert(participant_id, p);
            }
            RecordEvent::Assigned { task } => {
                self.tasks.insert(task.task_id.clone(), task);
            }
            RecordEvent::Responded { response } => {
                let participant = self.tasks[&response.task_id].participant_id.clone();
                self.responses.insert(response.task_id.clone(), response);
                let assigned = self.tasks_of(&participant).count();
                if assigned >= 2 && self.responses_of(&participant).count() == assigned {
                    self.participants.get_mut(&participant).expect("known participant").status =
                        ParticipantStatus::Completed;
                }
            }
        }
        Ok(())
    }

    pub fn from_events(dimensions: Vec<DimensionId>, events: impl IntoIterator<Item = RecordEvent>) -> Result<Self, LogError> {
        let mut log = Self::new(dimensions);
        for (i, event) in events.into_iter().enumerate() {
            log.apply(event).map_err(|e| LogError { line: i + 1, message: e.to_string() })?;
        }
        Ok(log)
    }

    /// Replays JSON lines; blank lines are ignored.
    pub fn parse_jsonl(dimensions: Vec<DimensionId>, text: &str) -> Result<Self, LogError> {
        let mut log = Self::new(dimensions);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: RecordEvent =
                serde_json::from_str(line).map_err(|e| LogError { line: i + 1, message: e.to_string() })?;
            log.apply(event).map_err(|e| LogError { line: i + 1, message: e.to_string() })?;
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub included: BTreeSet<String>,
    pub reports: Vec<ExclusionReport>,
    pub statuses: BTreeMap<String, ParticipantStatus>,
}

/// Applies the post-hoc rules: more than one failed comprehension check
/// across a participant's responses, or fewer than two responses.
pub fn apply_exclusions(log: &RecordLog) -> Exclusions {
    let mut out = Exclusions { included: BTreeSet::new(), reports: Vec::new(), statuses: BTreeMap::new() };
    for id in log.participants.keys() {
        let responses: Vec<&ComparisonResponse> = log.responses_of(id).collect();
        let failed: usize = responses.iter().map(|r| r.failed_checks()).sum();
        let checks = responses.len() * 2;
        let comprehension = failed > 1;
        let incomplete = responses.len() < 2;
        if comprehension {
            out.reports.push(ExclusionReport {
                participant_id: id.clone(),
                rule: ExclusionRule::ComprehensionFail,
                detail: format!("failed {failed} of {checks} comprehension checks"),
            });
        }
        if incomplete {
            out.reports.push(ExclusionReport {
                participant_id: id.clone(),
                rule: ExclusionRule::Incomplete,
                detail: format!("submitted {} of 2 responses", responses.len()),
            });
        }
        let status = if comprehension {
            ParticipantStatus::ExcludedComprehension
        } else if incomplete {
            ParticipantStatus::ExcludedIncomplete
        } else {
            out.included.insert(id.clone());
            ParticipantStatus::Completed
        };
        out.statuses.insert(id.clone(), status);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedComparison {
    pub dimension: DimensionId,
    pub winner: ConstitutionId,
    pub loser: ConstitutionId,
    pub winner_vignette: VignetteId,
    pub loser_vignette: VignetteId,
    pub participant_id: String,
    pub task_id: String,
}

/// One comparison per included response and non-skipped dimension, in task
/// order then dimension order.
pub fn extract_comparisons(log: &RecordLog, exclusions: &Exclusions) -> Vec<ExtractedComparison> {
    let mut out = Vec::new();
    for (task_id, response) in &log.responses {
        let task = &log.tasks[task_id];
        if !exclusions.included.contains(&task.participant_id) {
            continue;
        }
        for dimension in &log.dimensions {
            let (winner, loser) = match response.choices.get(dimension) {
                Some(Choice::Left) => ((&task.left_constitution, &task.left_vignette), (&task.right_constitution, &task.right_vignette)),
                Some(Choice::Right) => ((&task.right_constitution, &task.right_vignette), (&task.left_constitution, &task.left_vignette)),
                Some(Choice::Skipped) | None => continue,
            };
            out.push(ExtractedComparison {
                dimension: dimension.clone(),
                winner: winner.0.clone(),
                loser: loser.0.clone(),
                winner_vignette: winner.1.clone(),
                loser_vignette: loser.1.clone(),
                participant_id: task.participant_id.clone(),
                task_id: task_id.clone(),
            });
        }
    }
    out
}

/// Pools comparisons by constitution, one list per dimension in `dimensions`
/// order.
pub fn group_by_dimension(comparisons: &[ExtractedComparison], dimensions: &[DimensionId]) -> Vec<(DimensionId, Vec<Pair>)> {
    dimensions
        .iter()
        .map(|d| {
            let pairs = comparisons
                .iter()
                .filter(|c| &c.dimension == d)
                .map(|c| (c.winner.clone(), c.loser.clone()))
                .collect();
            (d.clone(), pairs)
        })
        .collect()
}
