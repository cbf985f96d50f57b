use std::collections::BTreeMap;

use chrono::Utc;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::assign::{assign_tasks, AssignError, AssignOptions, RunRef};
use super::log::{apply_exclusions, extract_comparisons, ExtractedComparison, RecordEvent};
use super::store::{EventCounts, RecordStore};
use super::{Choice, ComparisonResponse, ExclusionReport, ParticipantStatus, Position, RecordError};
use crate::corpus::{ComprehensionQuestion, Corpus, DimensionId, EvalDimension};
use crate::engine::{DialogueRun, Speaker};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("suite cannot be served: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollReply {
    pub participant_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub speaker: Speaker,
    pub text: String,
}

/// A comprehension question without its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub prompt: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionQuestion {
    pub id: DimensionId,
    pub question_text: String,
}

/// What a rater sees for one task. Constitutions and run ids are withheld.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub position: Position,
    pub answered: bool,
    pub left_transcript: Vec<TranscriptLine>,
    pub right_transcript: Vec<TranscriptLine>,
    /// Questions on the left and the right dialogue.
    pub comprehension: [QuestionView; 2],
    pub dimension_questions: Vec<DimensionQuestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskList {
    pub participant_id: String,
    pub status: ParticipantStatus,
    pub tasks: Vec<TaskView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub task_id: String,
    pub choices: BTreeMap<DimensionId, Choice>,
    /// Chosen option index for the left and the right question.
    pub comprehension_answers: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitReply {
    pub task_id: String,
    pub remaining_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionExport {
    pub dimension: DimensionId,
    pub comparisons: Vec<ExtractedComparison>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub included_participants: usize,
    pub exclusions: Vec<ExclusionReport>,
    pub dimensions: Vec<DimensionExport>,
}

/// Rating API logic over a fixed suite, independent of the HTTP layer.
pub struct RatingService {
    store: RecordStore,
    runs: BTreeMap<String, DialogueRun>,
    refs: Vec<RunRef>,
    questions: BTreeMap<String, ComprehensionQuestion>,
    dimensions: Vec<EvalDimension>,
    options: AssignOptions,
    seed: u64,
}

fn participant_seed(seed: u64, n: u64) -> u64 {
    seed ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn transcript(run: &DialogueRun) -> Vec<TranscriptLine> {
    run.conversation_2.turns.iter().map(|t| TranscriptLine { speaker: t.speaker, text: t.text.clone() }).collect()
}

impl RatingService {
    pub fn new(
        runs: Vec<DialogueRun>,
        corpus: &Corpus,
        store: RecordStore,
        seed: u64,
        options: AssignOptions,
    ) -> Result<Self, ServiceError> {
        let mut questions = BTreeMap::new();
        for run in &runs {
            let q = corpus
                .question(&run.run_id)
                .ok_or_else(|| ServiceError::Setup(format!("no comprehension question for `{}`", run.run_id)))?;
            questions.insert(run.run_id.clone(), q.clone());
        }
        if store.read(|log| log.dimensions != corpus.dimension_ids()) {
            return Err(ServiceError::Setup("record log dimensions differ from the corpus".into()));
        }
        let refs: Vec<RunRef> = runs.iter().map(RunRef::from).collect();
        assign_tasks("probe", &refs, seed, &options)?;
        Ok(Self {
            store,
            refs,
            runs: runs.into_iter().map(|r| (r.run_id.clone(), r)).collect(),
            questions,
            dimensions: corpus.dimensions.clone(),
            options,
            seed,
        })
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn counts(&self) -> EventCounts {
        self.store.counts()
    }

    /// Enrols a participant and assigns their two tasks in one append.
    pub fn enroll(&self) -> Result<EnrollReply, ServiceError> {
        let token: u32 = rand::rng().random();
        self.store.transact(|log| {
            let n = log.participants.len() as u64 + 1;
            let participant_id = format!("p{n:04}-{token:08x}");
            let tasks = assign_tasks(&participant_id, &self.refs, participant_seed(self.seed, n), &self.options)?;
            let mut events = vec![RecordEvent::Enrolled { participant_id: participant_id.clone(), enrolled_at: Utc::now() }];
            events.extend(tasks.into_iter().map(|task| RecordEvent::Assigned { task }));
            Ok::<_, ServiceError>((events, EnrollReply { participant_id }))
        })
    }

    fn question_view(&self, run_id: &str) -> QuestionView {
        let q = &self.questions[run_id];
        QuestionView { prompt: q.prompt.clone(), options: q.options.clone() }
    }

    pub fn tasks(&self, participant_id: &str) -> Result<TaskList, ServiceError> {
        self.store.read(|log| {
            let participant = log
                .participants
                .get(participant_id)
                .ok_or_else(|| RecordError::UnknownParticipant(participant_id.to_owned()))?;
            let dimension_questions: Vec<DimensionQuestion> = self
                .dimensions
                .iter()
                .map(|d| DimensionQuestion { id: d.id.clone(), question_text: d.question_text.clone() })
                .collect();
            let mut tasks: Vec<TaskView> = log
                .tasks_of(participant_id)
                .map(|t| TaskView {
                    task_id: t.task_id.clone(),
                    position: t.position,
                    answered: log.responses.contains_key(&t.task_id),
                    left_transcript: transcript(&self.runs[&t.left_run_id]),
                    right_transcript: transcript(&self.runs[&t.right_run_id]),
                    comprehension: [self.question_view(&t.left_run_id), self.question_view(&t.right_run_id)],
                    dimension_questions: dimension_questions.clone(),
                })
                .collect();
            tasks.sort_by_key(|t| t.position);
            Ok(TaskList { participant_id: participant_id.to_owned(), status: participant.status, tasks })
        })
    }

    /// Grades the comprehension answers and records the response.
    pub fn submit(&self, request: SubmitRequest) -> Result<SubmitReply, ServiceError> {
        self.store.transact(|log| {
            let task = log.tasks.get(&request.task_id).ok_or_else(|| RecordError::UnknownTask(request.task_id.clone()))?;
            let mut results = [false; 2];
            for (k, run_id) in [&task.left_run_id, &task.right_run_id].into_iter().enumerate() {
                let q = &self.questions[run_id.as_str()];
                let answer = request.comprehension_answers[k];
                if answer >= q.options.len() {
                    return Err(RecordError::Malformed(format!("comprehension answer {answer} is out of range")).into());
                }
                results[k] = q.is_correct(answer);
            }
            let response = ComparisonResponse {
                task_id: request.task_id.clone(),
                choices: request.choices.clone(),
                comprehension_results: results,
                submitted_at: Utc::now(),
            };
            let remaining = log
                .tasks_of(&task.participant_id)
                .filter(|t| t.task_id != task.task_id && !log.responses.contains_key(&t.task_id))
                .count();
            let reply = SubmitReply { task_id: request.task_id.clone(), remaining_tasks: remaining };
            Ok::<_, ServiceError>((vec![RecordEvent::Responded { response }], reply))
        })
    }

    /// Included comparisons per dimension after exclusions.
    pub fn export(&self) -> ExportBundle {
        let log = self.store.snapshot();
        let exclusions = apply_exclusions(&log);
        let extracted = extract_comparisons(&log, &exclusions);
        let dimensions = log
            .dimensions
            .iter()
            .map(|d| DimensionExport {
                dimension: d.clone(),
                comparisons: extracted.iter().filter(|c| &c.dimension == d).cloned().collect(),
            })
            .collect();
        ExportBundle { included_participants: exclusions.included.len(), exclusions: exclusions.reports, dimensions }
    }
}
