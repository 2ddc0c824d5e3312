//! Common-ground annotation of two-party dialogue.
//!
//! The crate holds the label model, the replayable dialogue engine, event
//! similarity providers, agreement metrics, the rule-based CG predictor,
//! scoring and the on-disk corpus formats.

pub mod agreement;
pub mod corpus_io;
pub mod engine;
pub mod eval;
pub mod heuristics;
pub mod model;
pub mod similarity;
pub mod synth;

pub use engine::{Diagnostic, DiagnosticCode, DialogueState, EngineError, Mutation, Record, Severity};
pub use model::{
    BeliefLabel, BeliefRecord, CgDegree, CgKind, CgLabel, CgRecord, Event, EventId, EventKind,
    Speaker, Utterance, UtteranceIndex,
};
