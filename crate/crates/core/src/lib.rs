//! Harness for comparing critic constitutions on simulated doctor-patient
//! interviews.
//!
//! The crate covers the offline half of the pipeline:
//!
//! - [`corpus`]: constitutions, vignettes, rating dimensions and comprehension
//!   questions loaded from a data directory.
//! - [`agents`]: role prompts, prompt contexts and text backends (live HTTP or
//!   scripted).
//! - [`engine`]: the doctor/patient/moderator/critic loop that produces one
//!   [`engine::DialogueRun`] per (vignette, constitution) cell.
//! - [`rating`]: task assignment, the append-only response log, exclusion
//!   rules and comparison extraction.
//! - [`analysis`]: win-rate matrices and reference-anchored Bradley-Terry fits
//!   with Wald intervals.
//! - [`manifest`]: suite files and digests tying generated runs to a corpus.

pub mod agents;
pub mod analysis;
pub mod corpus;
pub mod engine;
pub mod manifest;
pub mod rating;

pub use corpus::{ConstitutionId, Corpus, DimensionId};
