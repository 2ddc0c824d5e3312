//! Replayable dialogue state.
//!
//! A [`DialogueState`] is an append-only log of utterances, events and
//! belief/CG records. Per-(event, speaker) histories are indexes into that
//! log, and every query is answered from them without mutating anything.
//!
//! Belief records carry two timestamps. `evidence_at` is the utterance that
//! revealed the judgment and orders the history; `effective_from` is the
//! utterance from which the judgment holds and may be earlier (look-ahead).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    cg_degree, BeliefLabel, BeliefRecord, CgKind, CgLabel, CgRecord, Event, EventId, EventKind,
    Speaker, Utterance, UtteranceIndex,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("empty event text for {0}")]
    EmptyEventText(EventId),
    #[error("duplicate event id {0}")]
    DuplicateEvent(EventId),
    #[error("event {event} references unknown utterance {index}")]
    UnknownUtterance { event: EventId, index: UtteranceIndex },
    #[error("event {event} negates unknown event {target}")]
    DanglingNegation { event: EventId, target: EventId },
    #[error("event {event} negates {target}, which arises later")]
    NegationFromFuture { event: EventId, target: EventId },
    #[error("event {0}: kind derived_negation requires `negates` and only it may set it")]
    NegationKindMismatch(EventId),
    #[error("unknown event {0}")]
    UnknownEvent(EventId),
    #[error("null label cannot be recorded for {0}")]
    NullLabel(EventId),
    #[error("utterance index {index} is out of range 1..={max} for {event}")]
    IndexOutOfRange {
        event: EventId,
        index: UtteranceIndex,
        max: UtteranceIndex,
    },
    #[error("effective_from {effective_from} is after evidence_at {evidence_at} for {event}")]
    EffectiveAfterEvidence {
        event: EventId,
        effective_from: UtteranceIndex,
        evidence_at: UtteranceIndex,
    },
    #[error("record for {event} at {at} precedes the event's utterance {source_utterance}")]
    BeforeEvent {
        event: EventId,
        at: UtteranceIndex,
        source_utterance: UtteranceIndex,
    },
    #[error("out-of-order record for ({event}, {speaker}): {got} is not after {previous}")]
    OutOfOrder {
        event: EventId,
        speaker: Speaker,
        previous: UtteranceIndex,
        got: UtteranceIndex,
    },
}

impl EngineError {
    /// Stable upper-case code for reporting.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyUtterance => "EMPTY_UTTERANCE",
            EngineError::EmptyEventText(_) => "EMPTY_EVENT_TEXT",
            EngineError::DuplicateEvent(_) => "DUPLICATE_EVENT",
            EngineError::UnknownUtterance { .. } => "UNKNOWN_UTTERANCE",
            EngineError::DanglingNegation { .. } => "DANGLING_NEGATION",
            EngineError::NegationFromFuture { .. } => "NEGATION_FROM_FUTURE",
            EngineError::NegationKindMismatch(_) => "NEGATION_KIND_MISMATCH",
            EngineError::UnknownEvent(_) => "UNKNOWN_EVENT",
            EngineError::NullLabel(_) => "NULL_LABEL",
            EngineError::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            EngineError::EffectiveAfterEvidence { .. } => "EFFECTIVE_AFTER_EVIDENCE",
            EngineError::BeforeEvent { .. } => "BEFORE_EVENT",
            EngineError::OutOfOrder { .. } => "OUT_OF_ORDER",
        }
    }

    /// The event the error is about, if any.
    pub fn event(&self) -> Option<&EventId> {
        match self {
            EngineError::EmptyUtterance => None,
            EngineError::EmptyEventText(e)
            | EngineError::DuplicateEvent(e)
            | EngineError::NegationKindMismatch(e)
            | EngineError::UnknownEvent(e)
            | EngineError::NullLabel(e) => Some(e),
            EngineError::UnknownUtterance { event, .. }
            | EngineError::DanglingNegation { event, .. }
            | EngineError::NegationFromFuture { event, .. }
            | EngineError::IndexOutOfRange { event, .. }
            | EngineError::EffectiveAfterEvidence { event, .. }
            | EngineError::BeforeEvent { event, .. }
            | EngineError::OutOfOrder { event, .. } => Some(event),
        }
    }
}

/// One entry of the record stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Belief(BeliefRecord),
    Cg(CgRecord),
}

impl Record {
    pub fn event(&self) -> &EventId {
        match self {
            Record::Belief(r) => &r.event,
            Record::Cg(r) => &r.event,
        }
    }

    fn chrono_key(&self) -> (UtteranceIndex, UtteranceIndex) {
        match self {
            Record::Belief(r) => (r.evidence_at, r.effective_from),
            Record::Cg(r) => (r.at, r.at),
        }
    }
}

/// A single state transition. Replaying the mutations of a state in order
/// rebuilds it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AddUtterance { speaker: Speaker, text: String },
    AddEvent(Event),
    RecordBelief(BeliefRecord),
    RecordCg(CgRecord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    JaWithoutMutualBelief,
    RtWithoutCtminus,
    InWithoutPrior,
    CgSpeakerDivergence,
    DegreeMismatch,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::JaWithoutMutualBelief => "JA_WITHOUT_MUTUAL_BELIEF",
            DiagnosticCode::RtWithoutCtminus => "RT_WITHOUT_CTMINUS",
            DiagnosticCode::InWithoutPrior => "IN_WITHOUT_PRIOR",
            DiagnosticCode::CgSpeakerDivergence => "CG_SPEAKER_DIVERGENCE",
            DiagnosticCode::DegreeMismatch => "DEGREE_MISMATCH",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            DiagnosticCode::InWithoutPrior | DiagnosticCode::CgSpeakerDivergence => {
                Severity::Warning
            }
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub event: EventId,
    pub message: String,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, event: &EventId, message: String) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            event: event.clone(),
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}\t{}\t{}\t{}", self.code, self.event, self.message)
    }
}

type HistoryKey = (EventId, Speaker);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DialogueState {
    id: String,
    utterances: Vec<Utterance>,
    events: Vec<Event>,
    event_index: HashMap<EventId, usize>,
    records: Vec<Record>,
    belief_history: BTreeMap<HistoryKey, Vec<usize>>,
    cg_history: BTreeMap<HistoryKey, Vec<usize>>,
}

impl DialogueState {
    pub fn new(id: impl Into<String>) -> Self {
        DialogueState {
            id: id.into(),
            ..Default::default()
        }
    }

    /// Rebuilds a state by applying `mutations` in order to an empty one.
    pub fn replay<I>(id: impl Into<String>, mutations: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = Mutation>,
    {
        let mut state = DialogueState::new(id);
        for m in mutations {
            state.apply(m)?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, mutation: Mutation) -> Result<(), EngineError> {
        match mutation {
            Mutation::AddUtterance { speaker, text } => self.add_utterance(speaker, text).map(drop),
            Mutation::AddEvent(e) => self.add_event(e).map(drop),
            Mutation::RecordBelief(r) => self.record_belief(r),
            Mutation::RecordCg(r) => self.record_cg(r),
        }
    }

    /// The mutation stream that rebuilds this state.
    pub fn mutations(&self) -> Vec<Mutation> {
        let utterances = self.utterances.iter().map(|u| Mutation::AddUtterance {
            speaker: u.speaker,
            text: u.text.clone(),
        });
        let events = self.events.iter().cloned().map(Mutation::AddEvent);
        let records = self.records.iter().cloned().map(|r| match r {
            Record::Belief(b) => Mutation::RecordBelief(b),
            Record::Cg(c) => Mutation::RecordCg(c),
        });
        utterances.chain(events).chain(records).collect()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// Events in registration order.
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Events ordered by source utterance, then registration order.
    pub fn events_in_dialogue_order(&self) -> Vec<&Event> {
        let mut events: Vec<&Event> = self.events.iter().collect();
        events.sort_by_key(|e| e.source_utterance);
        events
    }

    pub fn event(&self, id: &EventId) -> Option<&Event> {
        self.event_index.get(id).map(|&i| &self.events[i])
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Number of applied mutations; used as a revision counter.
    pub fn revision(&self) -> u64 {
        (self.utterances.len() + self.events.len() + self.records.len()) as u64
    }

    /// Index of the last utterance, 0 for an empty dialogue.
    pub fn last_index(&self) -> UtteranceIndex {
        self.utterances.len() as UtteranceIndex
    }

    pub fn add_utterance(
        &mut self,
        speaker: Speaker,
        text: impl Into<String>,
    ) -> Result<UtteranceIndex, EngineError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EngineError::EmptyUtterance);
        }
        let index = self.last_index() + 1;
        self.utterances.push(Utterance {
            index,
            speaker,
            text,
        });
        Ok(index)
    }

    pub fn add_event(&mut self, event: Event) -> Result<EventId, EngineError> {
        if self.event_index.contains_key(&event.id) {
            return Err(EngineError::DuplicateEvent(event.id));
        }
        if event.text.trim().is_empty() {
            return Err(EngineError::EmptyEventText(event.id));
        }
        if event.source_utterance == 0 || event.source_utterance > self.last_index() {
            return Err(EngineError::UnknownUtterance {
                event: event.id,
                index: event.source_utterance,
            });
        }
        if (event.kind == EventKind::DerivedNegation) != event.negates.is_some() {
            return Err(EngineError::NegationKindMismatch(event.id));
        }
        if let Some(target) = &event.negates {
            match self.event(target) {
                None => {
                    return Err(EngineError::DanglingNegation {
                        event: event.id.clone(),
                        target: target.clone(),
                    })
                }
                Some(t) if t.source_utterance > event.source_utterance => {
                    return Err(EngineError::NegationFromFuture {
                        event: event.id.clone(),
                        target: target.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        let id = event.id.clone();
        self.event_index.insert(id.clone(), self.events.len());
        self.events.push(event);
        Ok(id)
    }

    fn check_index(&self, event: &EventId, index: UtteranceIndex) -> Result<(), EngineError> {
        if index == 0 || index > self.last_index() {
            return Err(EngineError::IndexOutOfRange {
                event: event.clone(),
                index,
                max: self.last_index(),
            });
        }
        Ok(())
    }

    fn require_event(&self, event: &EventId) -> Result<&Event, EngineError> {
        self.event(event)
            .ok_or_else(|| EngineError::UnknownEvent(event.clone()))
    }

    fn check_not_before_event(&self, event: &EventId, at: UtteranceIndex) -> Result<(), EngineError> {
        let source = self.require_event(event)?.source_utterance;
        if at < source {
            return Err(EngineError::BeforeEvent {
                event: event.clone(),
                at,
                source_utterance: source,
            });
        }
        Ok(())
    }

    pub fn record_belief(&mut self, record: BeliefRecord) -> Result<(), EngineError> {
        self.require_event(&record.event)?;
        if record.label.is_null() {
            return Err(EngineError::NullLabel(record.event));
        }
        self.check_index(&record.event, record.effective_from)?;
        self.check_index(&record.event, record.evidence_at)?;
        self.check_not_before_event(&record.event, record.evidence_at)?;
        if record.effective_from > record.evidence_at {
            return Err(EngineError::EffectiveAfterEvidence {
                event: record.event,
                effective_from: record.effective_from,
                evidence_at: record.evidence_at,
            });
        }
        let key = (record.event.clone(), record.speaker);
        if let Some(&last) = self.belief_history.get(&key).and_then(|h| h.last()) {
            let Record::Belief(prev) = &self.records[last] else {
                unreachable!("belief index points at a CG record")
            };
            if record.evidence_at <= prev.evidence_at {
                return Err(EngineError::OutOfOrder {
                    event: record.event,
                    speaker: record.speaker,
                    previous: prev.evidence_at,
                    got: record.evidence_at,
                });
            }
        }
        self.belief_history
            .entry(key)
            .or_default()
            .push(self.records.len());
        self.records.push(Record::Belief(record));
        Ok(())
    }

    pub fn record_cg(&mut self, record: CgRecord) -> Result<(), EngineError> {
        self.require_event(&record.event)?;
        if record.label.is_null() {
            return Err(EngineError::NullLabel(record.event));
        }
        self.check_index(&record.event, record.at)?;
        self.check_not_before_event(&record.event, record.at)?;
        let key = (record.event.clone(), record.speaker);
        if let Some(&last) = self.cg_history.get(&key).and_then(|h| h.last()) {
            let Record::Cg(prev) = &self.records[last] else {
                unreachable!("CG index points at a belief record")
            };
            if record.at <= prev.at {
                return Err(EngineError::OutOfOrder {
                    event: record.event,
                    speaker: record.speaker,
                    previous: prev.at,
                    got: record.at,
                });
            }
        }
        self.cg_history.entry(key).or_default().push(self.records.len());
        self.records.push(Record::Cg(record));
        Ok(())
    }

    fn beliefs_of(&self, event: &EventId, speaker: Speaker) -> impl Iterator<Item = &BeliefRecord> {
        self.belief_history
            .get(&(event.clone(), speaker))
            .into_iter()
            .flatten()
            .map(|&i| match &self.records[i] {
                Record::Belief(b) => b,
                Record::Cg(_) => unreachable!(),
            })
    }

    fn cgs_of(&self, event: &EventId, speaker: Speaker) -> impl Iterator<Item = &CgRecord> {
        self.cg_history
            .get(&(event.clone(), speaker))
            .into_iter()
            .flatten()
            .map(|&i| match &self.records[i] {
                Record::Cg(c) => c,
                Record::Belief(_) => unreachable!(),
            })
    }

    /// The overhearer's settled view: among records effective at or before
    /// `t`, the one with the latest evidence, with all evidence admitted.
    pub fn belief_at(
        &self,
        event: &EventId,
        speaker: Speaker,
        t: UtteranceIndex,
    ) -> Result<BeliefLabel, EngineError> {
        self.require_event(event)?;
        Ok(self
            .beliefs_of(event, speaker)
            .filter(|r| r.effective_from <= t)
            .max_by_key(|r| r.evidence_at)
            .map_or(BeliefLabel::Null, |r| r.label))
    }

    /// Like [`belief_at`](Self::belief_at) but only admits evidence
    /// available by utterance `t`, i.e. what was known mid-dialogue.
    pub fn belief_known_by(
        &self,
        event: &EventId,
        speaker: Speaker,
        t: UtteranceIndex,
    ) -> Result<BeliefLabel, EngineError> {
        self.require_event(event)?;
        Ok(self
            .beliefs_of(event, speaker)
            .filter(|r| r.effective_from <= t && r.evidence_at <= t)
            .max_by_key(|r| r.evidence_at)
            .map_or(BeliefLabel::Null, |r| r.label))
    }

    /// Belief after all evidence, at the end of the dialogue.
    pub fn final_belief(&self, event: &EventId, speaker: Speaker) -> Result<BeliefLabel, EngineError> {
        self.belief_at(event, speaker, self.last_index())
    }

    /// Utterance from which the final belief of `speaker` holds.
    pub fn final_belief_effective_from(
        &self,
        event: &EventId,
        speaker: Speaker,
    ) -> Option<UtteranceIndex> {
        self.beliefs_of(event, speaker)
            .max_by_key(|r| r.evidence_at)
            .map(|r| r.effective_from)
    }

    pub fn cg_at(
        &self,
        event: &EventId,
        speaker: Speaker,
        t: UtteranceIndex,
    ) -> Result<CgLabel, EngineError> {
        self.require_event(event)?;
        Ok(self
            .cgs_of(event, speaker)
            .filter(|r| r.at <= t)
            .last()
            .map_or(CgLabel::Null, |r| r.label))
    }

    pub fn final_cg(&self, event: &EventId, speaker: Speaker) -> Result<CgLabel, EngineError> {
        self.cg_at(event, speaker, self.last_index())
    }

    /// `speaker`'s common ground at utterance `t`. Rejected events stay in
    /// the map labelled RT; events without any record are omitted.
    pub fn cg_state(&self, speaker: Speaker, t: UtteranceIndex) -> BTreeMap<EventId, CgLabel> {
        self.events
            .iter()
            .filter_map(|e| {
                self.cgs_of(&e.id, speaker)
                    .filter(|r| r.at <= t)
                    .last()
                    .map(|r| (e.id.clone(), r.label))
            })
            .collect()
    }

    /// Every record about `event`, ordered by time (evidence for beliefs),
    /// then by effective time, then by insertion.
    pub fn history(&self, event: &EventId) -> Result<Vec<Record>, EngineError> {
        self.require_event(event)?;
        let mut entries: Vec<(usize, &Record)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.event() == event)
            .collect();
        entries.sort_by_key(|(seq, r)| (r.chrono_key(), *seq));
        Ok(entries.into_iter().map(|(_, r)| r.clone()).collect())
    }

    /// Consistency diagnostics, ordered by (event id, code).
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mutual = |l: BeliefLabel| matches!(l, BeliefLabel::CtPlus | BeliefLabel::Ps);

        for record in &self.records {
            let Record::Cg(cg) = record else { continue };
            let e = &cg.event;
            let t = cg.at;
            let (Ok(bel_a), Ok(bel_b)) = (
                self.belief_at(e, Speaker::A, t),
                self.belief_at(e, Speaker::B, t),
            ) else {
                continue;
            };
            match cg.label.kind() {
                CgKind::Ja | CgKind::In => {
                    if mutual(bel_a) && mutual(bel_b) {
                        if let (Some(stored), Ok(expected)) = (cg.label.degree(), cg_degree(bel_a, bel_b)) {
                            if stored != expected {
                                out.push(Diagnostic::new(
                                    DiagnosticCode::DegreeMismatch,
                                    e,
                                    format!(
                                        "CG({}) at {t} stores degree {stored} but beliefs ({bel_a}, {bel_b}) give {expected}",
                                        cg.speaker
                                    ),
                                ));
                            }
                        }
                    } else if cg.label.kind() == CgKind::Ja {
                        out.push(Diagnostic::new(
                            DiagnosticCode::JaWithoutMutualBelief,
                            e,
                            format!(
                                "CG({}) = JA at {t} but Bel(A) = {bel_a}, Bel(B) = {bel_b}",
                                cg.speaker
                            ),
                        ));
                    }
                    if cg.label.kind() == CgKind::In && !self.has_prior_cg(e, t) {
                        out.push(Diagnostic::new(
                            DiagnosticCode::InWithoutPrior,
                            e,
                            format!(
                                "CG({}) = IN at {t} without an earlier JA/IN for this event",
                                cg.speaker
                            ),
                        ));
                    }
                }
                CgKind::Rt => {
                    if bel_a != BeliefLabel::CtMinus && bel_b != BeliefLabel::CtMinus {
                        out.push(Diagnostic::new(
                            DiagnosticCode::RtWithoutCtminus,
                            e,
                            format!(
                                "CG({}) = RT at {t} but Bel(A) = {bel_a}, Bel(B) = {bel_b}",
                                cg.speaker
                            ),
                        ));
                    }
                }
                CgKind::Null => {}
            }
        }

        for event in &self.events {
            let a = self.final_cg(&event.id, Speaker::A).unwrap_or(CgLabel::Null);
            let b = self.final_cg(&event.id, Speaker::B).unwrap_or(CgLabel::Null);
            if a.kind() != b.kind() {
                out.push(Diagnostic::new(
                    DiagnosticCode::CgSpeakerDivergence,
                    &event.id,
                    format!("final CG(A) = {a}, CG(B) = {b}"),
                ));
            }
        }

        out.sort_by(|x, y| {
            (&x.event, x.code.as_str(), &x.message).cmp(&(&y.event, y.code.as_str(), &y.message))
        });
        out
    }

    /// True if `event`, or another event with the same normalized text, was
    /// JA or IN for either speaker strictly before `t`.
    fn has_prior_cg(&self, event: &EventId, t: UtteranceIndex) -> bool {
        let Some(target) = self.event(event) else {
            return false;
        };
        let key = normalize(&target.text);
        self.records.iter().any(|r| match r {
            Record::Cg(c) if c.at < t && matches!(c.label.kind(), CgKind::Ja | CgKind::In) => {
                &c.event == event
                    || self
                        .event(&c.event)
                        .is_some_and(|other| normalize(&other.text) == key)
            }
            _ => false,
        })
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
