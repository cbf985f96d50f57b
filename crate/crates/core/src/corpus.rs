//! Static study content: constitutions, vignettes, rating dimensions and
//! comprehension-check questions.
//!
//! On-disk layout (all UTF-8):
//!
//! ```text
//! <root>/constitutions/<id>.txt     first line title, remainder guideline text
//! <root>/vignettes/<id>.txt         "Label: value" lines for the seven profile fields
//! <root>/dimensions.tsv             header, then id<TAB>label<TAB>question
//! <root>/comprehension/<run>.tsv    header, then prompt<TAB>correct_index<TAB>option...
//! ```
//!
//! A loaded [`Corpus`] is immutable and can be shared freely between threads.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl PartialEq<str> for $name {
            fn eq(&self, other: &str) -> bool {
                self.0 == other
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

string_id!(
    /// Identifier of a critic constitution (`best_practices`, `empathetic`,
    /// `doctor`, `none` in the shipped corpus).
    ConstitutionId
);
string_id!(VignetteId);
string_id!(
    /// Identifier of a rating dimension.
    DimensionId
);

impl ConstitutionId {
    pub const BEST_PRACTICES: &'static str = "best_practices";
    pub const EMPATHETIC: &'static str = "empathetic";
    pub const DOCTOR: &'static str = "doctor";
    /// The baseline constitution, used as the Bradley-Terry reference.
    pub const NONE: &'static str = "none";
}

impl DimensionId {
    pub const FOSTERING_RELATIONSHIP: &'static str = "fostering_relationship";
    pub const GATHERING_INFORMATION: &'static str = "gathering_information";
    pub const PROVIDING_INFORMATION: &'static str = "providing_information";
    pub const DECISION_MAKING: &'static str = "decision_making";
    pub const ENABLING_BEHAVIOUR: &'static str = "enabling_behaviour";
    pub const RESPONDING_TO_EMOTIONS: &'static str = "responding_to_emotions";
    pub const HOLISTIC: &'static str = "holistic";

    /// The six patient-centred communication dimensions followed by the
    /// holistic preference.
    pub const ALL: [&'static str; 7] = [
        Self::FOSTERING_RELATIONSHIP,
        Self::GATHERING_INFORMATION,
        Self::PROVIDING_INFORMATION,
        Self::DECISION_MAKING,
        Self::ENABLING_BEHAVIOUR,
        Self::RESPONDING_TO_EMOTIONS,
        Self::HOLISTIC,
    ];
}

/// Patient profile labels, in the order they appear in the patient prompt.
pub const PROFILE_LABELS: [&str; 7] = [
    "Demographics",
    "Overview",
    "Primary Symptoms",
    "Secondary Symptoms",
    "Medical History",
    "Social History",
    "Key Review of Vitals",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vignette {
    pub id: VignetteId,
    pub demographics: String,
    pub overview: String,
    pub primary_symptoms: String,
    pub secondary_symptoms: String,
    pub medical_history: String,
    pub social_history: String,
    pub key_vitals: String,
}

impl Vignette {
    fn fields(&self) -> [&str; 7] {
        [
            &self.demographics,
            &self.overview,
            &self.primary_symptoms,
            &self.secondary_symptoms,
            &self.medical_history,
            &self.social_history,
            &self.key_vitals,
        ]
    }

    fn fields_mut(&mut self) -> [&mut String; 7] {
        [
            &mut self.demographics,
            &mut self.overview,
            &mut self.primary_symptoms,
            &mut self.secondary_symptoms,
            &mut self.medical_history,
            &mut self.social_history,
            &mut self.key_vitals,
        ]
    }

    /// Profile rendered as labelled lines, one per field.
    pub fn profile_text(&self) -> String {
        PROFILE_LABELS
            .iter()
            .zip(self.fields())
            .map(|(label, value)| format!("{label}: {value}"))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Text of the primary and secondary symptom fields.
    pub fn symptom_text(&self) -> String {
        format!("{}\n{}", self.primary_symptoms, self.secondary_symptoms)
    }

    pub fn parse(id: VignetteId, text: &str, file: &Path) -> Result<Self, CorpusError> {
        let mut values: [Option<String>; 7] = Default::default();
        let mut current: Option<usize> = None;
        for line in text.lines() {
            if let Some((idx, rest)) = match_label(line) {
                if values[idx].is_some() {
                    return Err(CorpusError::schema(file, PROFILE_LABELS[idx], "field given twice"));
                }
                values[idx] = Some(rest.trim().to_owned());
                current = Some(idx);
            } else if line.trim().is_empty() {
                continue;
            } else if let Some(idx) = current {
                let value = values[idx].get_or_insert_with(String::new);
                if !value.is_empty() {
                    value.push('\n');
                }
                value.push_str(line.trim());
            } else {
                return Err(CorpusError::schema(file, "profile", "text before the first label"));
            }
        }

        let mut vignette = Vignette {
            id,
            demographics: String::new(),
            overview: String::new(),
            primary_symptoms: String::new(),
            secondary_symptoms: String::new(),
            medical_history: String::new(),
            social_history: String::new(),
            key_vitals: String::new(),
        };
        for ((slot, value), label) in vignette.fields_mut().into_iter().zip(values).zip(PROFILE_LABELS) {
            match value {
                Some(v) if !v.is_empty() => *slot = v,
                Some(_) => return Err(CorpusError::schema(file, label, "empty value")),
                None => return Err(CorpusError::schema(file, label, "missing")),
            }
        }
        Ok(vignette)
    }

    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for (label, value) in PROFILE_LABELS.iter().zip(self.fields()) {
            out.push_str(label);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }
}

fn match_label(line: &str) -> Option<(usize, &str)> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim();
    PROFILE_LABELS
        .iter()
        .position(|label| label.eq_ignore_ascii_case(head))
        .map(|idx| (idx, rest))
}

static WORD_LIMIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"Give your feedback in (\d+) words or less\.").unwrap());

/// Opening words shared by every critic prompt.
pub const CRITIC_FRAME_PREFIX: &str = "You are an AI critic providing feedback";

pub fn feedback_limit_sentence(words: u32) -> String {
    format!("Give your feedback in {words} words or less.")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constitution {
    pub id: ConstitutionId,
    pub title: String,
    pub critic_guideline_text: String,
    pub feedback_word_limit: u32,
}

impl Constitution {
    pub const DEFAULT_WORD_LIMIT: u32 = 100;

    /// Builds a constitution, reading the word limit from the closing
    /// instruction when the text carries one.
    pub fn new(id: ConstitutionId, title: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let feedback_word_limit = WORD_LIMIT
            .captures_iter(&text)
            .last()
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(Self::DEFAULT_WORD_LIMIT);
        Self {
            id,
            title: title.into(),
            critic_guideline_text: text,
            feedback_word_limit,
        }
    }

    pub fn parse(id: ConstitutionId, text: &str, file: &Path) -> Result<Self, CorpusError> {
        let (title, body) = text.split_once('\n').unwrap_or((text, ""));
        let title = title.trim();
        if title.is_empty() {
            return Err(CorpusError::schema(file, "title", "first line must hold the title"));
        }
        Ok(Self::new(id, title, body.trim_end_matches(['\n', '\r'])))
    }

    pub fn to_file_text(&self) -> String {
        format!("{}\n{}\n", self.title, self.critic_guideline_text)
    }

    /// The word-limit instruction closing the critic prompt.
    pub fn limit_sentence(&self) -> String {
        feedback_limit_sentence(self.feedback_word_limit)
    }

    /// The constitution content that fills the critic frame
    /// `"You are an AI critic providing feedback{slot}Give your feedback in N words or less."`.
    ///
    /// Guideline text that already spells out the frame contributes only what
    /// lies between the opening words and the closing limit instruction, so
    /// the rendered prompt reproduces it byte for byte.
    pub fn critic_slot(&self) -> String {
        let text = self.critic_guideline_text.trim();
        let limit = self.limit_sentence();
        let body = text.strip_suffix(limit.as_str()).unwrap_or(text);
        match body.strip_prefix(CRITIC_FRAME_PREFIX) {
            Some(inner) => inner.to_owned(),
            None if body.is_empty() => " ".to_owned(),
            None => format!(" {} ", body.trim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDimension {
    pub id: DimensionId,
    pub label: String,
    pub question_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComprehensionQuestion {
    /// Run identifier of the dialogue the question is about.
    pub dialogue_ref: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl ComprehensionQuestion {
    pub fn is_correct(&self, answer: usize) -> bool {
        answer == self.correct_index
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus path {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("missing corpus file {0}")]
    MissingFile(PathBuf),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no constitutions found in {0}")]
    NoConstitutions(PathBuf),
    #[error("no vignettes found in {0}")]
    NoVignettes(PathBuf),
    #[error("{file}: field `{field}`: {message}")]
    Schema { file: PathBuf, field: String, message: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
}

impl CorpusError {
    fn schema(file: &Path, field: &str, message: impl Into<String>) -> Self {
        Self::Schema {
            file: file.to_owned(),
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub vignettes: Vec<Vignette>,
    pub constitutions: Vec<Constitution>,
    pub dimensions: Vec<EvalDimension>,
    pub questions: Vec<ComprehensionQuestion>,
}

impl Corpus {
    /// Assembles a corpus from parts, checking id uniqueness and the
    /// per-type invariants.
    pub fn from_parts(
        vignettes: Vec<Vignette>,
        constitutions: Vec<Constitution>,
        dimensions: Vec<EvalDimension>,
        questions: Vec<ComprehensionQuestion>,
    ) -> Result<Self, CorpusError> {
        check_unique("constitution", constitutions.iter().map(|c| c.id.as_str()))?;
        check_unique("vignette", vignettes.iter().map(|v| v.id.as_str()))?;
        check_unique("dimension", dimensions.iter().map(|d| d.id.as_str()))?;
        check_unique("comprehension question", questions.iter().map(|q| q.dialogue_ref.as_str()))?;
        for q in &questions {
            let file = PathBuf::from(format!("comprehension/{}.tsv", q.dialogue_ref));
            if q.options.len() < 2 {
                return Err(CorpusError::schema(&file, "options", "need at least two options"));
            }
            if q.correct_index >= q.options.len() {
                return Err(CorpusError::schema(&file, "correct_index", "out of range"));
            }
        }
        Ok(Self { vignettes, constitutions, dimensions, questions })
    }

    pub fn vignette(&self, id: &str) -> Option<&Vignette> {
        self.vignettes.iter().find(|v| v.id == id)
    }

    pub fn constitution(&self, id: &str) -> Option<&Constitution> {
        self.constitutions.iter().find(|c| c.id == id)
    }

    pub fn dimension(&self, id: &str) -> Option<&EvalDimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    pub fn question(&self, run_id: &str) -> Option<&ComprehensionQuestion> {
        self.questions.iter().find(|q| q.dialogue_ref == run_id)
    }

    pub fn constitution_ids(&self) -> Vec<ConstitutionId> {
        self.constitutions.iter().map(|c| c.id.clone()).collect()
    }

    pub fn dimension_ids(&self) -> Vec<DimensionId> {
        self.dimensions.iter().map(|d| d.id.clone()).collect()
    }

    /// Writes the corpus in the directory layout understood by [`load_corpus`].
    pub fn write_to(&self, root: &Path) -> Result<(), CorpusError> {
        let write = |path: PathBuf, text: String| {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| CorpusError::Io { path: parent.to_owned(), source })?;
            }
            fs::write(&path, text).map_err(|source| CorpusError::Io { path, source })
        };
        for c in &self.constitutions {
            write(root.join("constitutions").join(format!("{}.txt", c.id)), c.to_file_text())?;
        }
        for v in &self.vignettes {
            write(root.join("vignettes").join(format!("{}.txt", v.id)), v.to_file_text())?;
        }
        let mut dims = String::from("id\tlabel\tquestion\n");
        for d in &self.dimensions {
            dims.push_str(&format!("{}\t{}\t{}\n", d.id, d.label, d.question_text));
        }
        write(root.join("dimensions.tsv"), dims)?;
        fs::create_dir_all(root.join("comprehension")).map_err(|source| CorpusError::Io {
            path: root.join("comprehension"),
            source,
        })?;
        for q in &self.questions {
            let mut text = format!("prompt\tcorrect_index\toptions...\n{}\t{}", q.prompt, q.correct_index);
            for option in &q.options {
                text.push('\t');
                text.push_str(option);
            }
            text.push('\n');
            write(root.join("comprehension").join(format!("{}.tsv", q.dialogue_ref)), text)?;
        }
        Ok(())
    }
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId { kind, id: id.to_owned() });
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_owned()),
        _ => CorpusError::Io { path: path.to_owned(), source },
    })
}

/// Lists `*.<ext>` files of a directory as (id, path), sorted by file name.
/// A missing directory yields nothing.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>, CorpusError> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(CorpusError::Io { path: dir.to_owned(), source }),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| CorpusError::Io { path: dir.to_owned(), source })?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let id = stem.trim().to_ascii_lowercase();
        if !is_valid_id(&id) {
            return Err(CorpusError::schema(&path, "id", format!("invalid id `{stem}` in file name")));
        }
        files.push((id, path));
    }
    files.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(files)
}

/// Loads and validates the corpus rooted at `root`.
pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_owned()));
    }

    let constitution_files = list_files(&root.join("constitutions"), "txt")?;
    if constitution_files.is_empty() {
        return Err(CorpusError::NoConstitutions(root.to_owned()));
    }
    let constitutions = constitution_files
        .iter()
        .map(|(id, path)| Constitution::parse(ConstitutionId::new(id.as_str()), &read(path)?, path))
        .collect::<Result<Vec<_>, _>>()?;

    let vignette_files = list_files(&root.join("vignettes"), "txt")?;
    if vignette_files.is_empty() {
        return Err(CorpusError::NoVignettes(root.to_owned()));
    }
    let vignettes = vignette_files
        .iter()
        .map(|(id, path)| Vignette::parse(VignetteId::new(id.as_str()), &read(path)?, path))
        .collect::<Result<Vec<_>, _>>()?;

    let dims_path = root.join("dimensions.tsv");
    let dimensions = parse_dimensions(&read(&dims_path)?, &dims_path)?;

    let mut questions = Vec::new();
    for (run_id, path) in list_files(&root.join("comprehension"), "tsv")? {
        questions.push(parse_question(run_id, &read(&path)?, &path)?);
    }

    Corpus::from_parts(vignettes, constitutions, dimensions, questions)
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    // first line is a header
    text.lines().skip(1).filter(|l| !l.trim().is_empty())
}

fn parse_dimensions(text: &str, file: &Path) -> Result<Vec<EvalDimension>, CorpusError> {
    let mut dims = Vec::new();
    for line in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, label, question] = cols[..] else {
            return Err(CorpusError::schema(file, "row", format!("expected 3 columns, got {}", cols.len())));
        };
        if !is_valid_id(id) {
            return Err(CorpusError::schema(file, "id", format!("invalid id `{id}`")));
        }
        if question.trim().is_empty() {
            return Err(CorpusError::schema(file, "question", format!("empty for `{id}`")));
        }
        dims.push(EvalDimension {
            id: DimensionId::new(id),
            label: label.to_owned(),
            question_text: question.to_owned(),
        });
    }
    if dims.is_empty() {
        return Err(CorpusError::schema(file, "row", "no dimensions"));
    }
    Ok(dims)
}

fn parse_question(run_id: String, text: &str, file: &Path) -> Result<ComprehensionQuestion, CorpusError> {
    let rows: Vec<&str> = data_lines(text).collect();
    let [row] = rows[..] else {
        return Err(CorpusError::schema(file, "row", format!("expected one question, got {}", rows.len())));
    };
    let mut cols = row.split('\t');
    let prompt = cols.next().unwrap_or_default().to_owned();
    let correct_index = cols
        .next()
        .and_then(|c| c.trim().parse::<usize>().ok())
        .ok_or_else(|| CorpusError::schema(file, "correct_index", "not a non-negative integer"))?;
    let options: Vec<String> = cols.map(str::to_owned).collect();
    if prompt.trim().is_empty() {
        return Err(CorpusError::schema(file, "prompt", "empty"));
    }
    if options.len() < 2 {
        return Err(CorpusError::schema(file, "options", "need at least two options"));
    }
    if correct_index >= options.len() {
        return Err(CorpusError::schema(file, "correct_index", "out of range"));
    }
    Ok(ComprehensionQuestion { dialogue_ref: run_id, prompt, options, correct_index })
}

#[derive(Debug, Clone, Copy)]
pub struct LintConfig {
    pub max_words: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        Self { max_words: 800 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstitutionWarning {
    EmptyGuideline,
    MissingWordLimit { expected: String },
    TooLong { words: usize, max_words: usize },
}

impl fmt::Display for ConstitutionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyGuideline => f.write_str("empty guideline"),
            Self::MissingWordLimit { expected } => write!(f, "guideline text lacks the closing instruction \"{expected}\""),
            Self::TooLong { words, max_words } => write!(f, "guideline text has {words} words (limit {max_words})"),
        }
    }
}

/// Checks a constitution's guideline text; never modifies it.
pub fn validate_constitution_text(c: &Constitution, lint: &LintConfig) -> Vec<ConstitutionWarning> {
    let text = c.critic_guideline_text.trim();
    if text.is_empty() {
        return vec![ConstitutionWarning::EmptyGuideline];
    }
    let mut warnings = Vec::new();
    let expected = c.limit_sentence();
    if !text.contains(&expected) {
        warnings.push(ConstitutionWarning::MissingWordLimit { expected });
    }
    let words = text.split_whitespace().count();
    if words > lint.max_words {
        warnings.push(ConstitutionWarning::TooLong { words, max_words: lint.max_words });
    }
    warnings
}
