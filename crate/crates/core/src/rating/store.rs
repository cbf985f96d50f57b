use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::log::{LogError, RecordEvent, RecordLog};
use super::RecordError;
use crate::corpus::DimensionId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub enrolled: u64,
    pub assigned: u64,
    pub responded: u64,
}

impl EventCounts {
    fn add(&mut self, event: &RecordEvent) {
        match event {
            RecordEvent::Enrolled { .. } => self.enrolled += 1,
            RecordEvent::Assigned { .. } => self.assigned += 1,
            RecordEvent::Responded { .. } => self.responded += 1,
        }
    }
}

struct Inner {
    log: RecordLog,
    file: Option<File>,
    counts: EventCounts,
}

/// Append-only event log with the replayed state kept in memory.
///
/// Every write goes through one lock, so the duplicate checks and the append
/// happen atomically.
pub struct RecordStore {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreOpenError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Replay { path: PathBuf, source: LogError },
}

impl RecordStore {
    pub fn in_memory(dimensions: Vec<DimensionId>) -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner { log: RecordLog::new(dimensions), file: None, counts: EventCounts::default() }),
        }
    }

    /// Opens `path` for appending, replaying any events already in it.
    pub fn open(path: &Path, dimensions: Vec<DimensionId>) -> Result<Self, StoreOpenError> {
        let io_err = |source| StoreOpenError::Io { path: path.to_owned(), source };
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let log = RecordLog::parse_jsonl(dimensions, &existing)
            .map_err(|source| StoreOpenError::Replay { path: path.to_owned(), source })?;
        let counts = EventCounts {
            enrolled: log.participants.len() as u64,
            assigned: log.tasks.len() as u64,
            responded: log.responses.len() as u64,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self { path: Some(path.to_owned()), inner: Mutex::new(Inner { log, file: Some(file), counts }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Builds events from the current state and appends them as one unit:
    /// either all are written or none are.
    pub fn transact<R, E>(&self, build: impl FnOnce(&RecordLog) -> Result<(Vec<RecordEvent>, R), E>) -> Result<R, E>
    where
        E: From<RecordError>,
    {
        let mut inner = self.lock();
        let (events, out) = build(&inner.log)?;
        let next = if events.len() == 1 {
            inner.log.check(&events[0])?;
            None
        } else {
            let mut scratch = inner.log.clone();
            for e in &events {
                scratch.apply(e.clone())?;
            }
            Some(scratch)
        };
        if let Some(file) = inner.file.as_mut() {
            let text: String = events.iter().map(RecordEvent::to_line).collect();
            file.write_all(text.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| RecordError::Io(e.to_string()))?;
        }
        for e in &events {
            inner.counts.add(e);
        }
        match next {
            Some(log) => inner.log = log,
            None => {
                let event = events.into_iter().next().expect("one event");
                inner.log.apply(event).expect("checked above");
            }
        }
        Ok(out)
    }

    pub fn append(&self, event: RecordEvent) -> Result<(), RecordError> {
        self.transact(|_| Ok::<_, RecordError>((vec![event], ())))
    }

    pub fn read<R>(&self, f: impl FnOnce(&RecordLog) -> R) -> R {
        f(&self.lock().log)
    }

    pub fn snapshot(&self) -> RecordLog {
        self.read(RecordLog::clone)
    }

    pub fn counts(&self) -> EventCounts {
        self.lock().counts
    }
}
