//! Pairwise rating collection: task assignment, the append-only record log,
//! exclusion rules and extraction of comparisons for analysis.

mod assign;
mod log;
mod service;
mod store;
mod synthetic;

pub use assign::{assign_tasks, matching_index, AssignError, AssignOptions, RunRef};
pub use log::{
    apply_exclusions, extract_comparisons, group_by_dimension, Exclusions, ExtractedComparison, LogError, RecordEvent,
    RecordLog,
};
pub use service::{
    DimensionExport, DimensionQuestion, EnrollReply, ExportBundle, QuestionView, RatingService, ServiceError, SubmitReply, SubmitRequest,
    TaskList, TaskView, TranscriptLine,
};
pub use store::{EventCounts, RecordStore, StoreOpenError};
pub use synthetic::{synthetic_record_log, SyntheticDesign};

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{ConstitutionId, DimensionId, VignetteId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantStatus {
    Active,
    Completed,
    ExcludedComprehension,
    ExcludedIncomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    pub enrolled_at: DateTime<Utc>,
    pub status: ParticipantStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTask {
    pub task_id: String,
    pub participant_id: String,
    pub position: Position,
    pub left_run_id: String,
    pub right_run_id: String,
    pub left_constitution: ConstitutionId,
    pub right_constitution: ConstitutionId,
    pub left_vignette: VignetteId,
    pub right_vignette: VignetteId,
    /// Draw that fixed the presentation order: an odd value put the pair's
    /// second constitution on the left.
    pub left_right_order_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Left,
    Right,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonResponse {
    pub task_id: String,
    pub choices: BTreeMap<DimensionId, Choice>,
    /// Whether the comprehension question on the left and right dialogue
    /// was answered correctly.
    pub comprehension_results: [bool; 2],
    pub submitted_at: DateTime<Utc>,
}

impl ComparisonResponse {
    pub fn failed_checks(&self) -> usize {
        self.comprehension_results.iter().filter(|ok| !**ok).count()
    }

    pub fn skipped(&self) -> usize {
        self.choices.values().filter(|c| **c == Choice::Skipped).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRule {
    ComprehensionFail,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub participant_id: String,
    pub rule: ExclusionRule,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("task `{0}` already has a response")]
    Duplicate(String),
    #[error("participant `{0}` is already enrolled")]
    DuplicateParticipant(String),
    #[error("task `{0}` is already assigned")]
    DuplicateTask(String),
    #[error("participant `{participant}` is {status:?}")]
    Inactive { participant: String, status: ParticipantStatus },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("writing record log: {0}")]
    Io(String),
}
