//! Domain types shared across the workbench: speakers, utterances, events,
//! belief and common-ground labels, and the timestamped records that the
//! engine keeps histories of.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unranked label: {0}")]
    UnrankedLabel(BeliefLabel),
    #[error("degree undefined for ({0}, {1})")]
    DegreeUndefined(BeliefLabel, BeliefLabel),
    #[error("unknown speaker: {0:?}")]
    UnknownSpeaker(String),
    #[error("unknown label: {0:?}")]
    UnknownLabel(String),
    #[error("unknown event kind: {0:?}")]
    UnknownEventKind(String),
}

/// One of the two interlocutors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub const BOTH: [Speaker; 2] = [Speaker::A, Speaker::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::A => "A",
            Speaker::B => "B",
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Speaker {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Speaker::A),
            "B" => Ok(Speaker::B),
            other => Err(ModelError::UnknownSpeaker(other.to_string())),
        }
    }
}

/// 1-based position of an utterance in a dialogue. Index 0 means "before
/// the first utterance" and only appears as a query time.
pub type UtteranceIndex = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub index: UtteranceIndex,
    pub speaker: Speaker,
    pub text: String,
}

/// Identifier of an event inside one dialogue, e.g. `e1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(String);

impl EventId {
    pub fn new(id: impl Into<String>) -> Self {
        EventId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        EventId(s.to_string())
    }
}

impl From<String> for EventId {
    fn from(s: String) -> Self {
        EventId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Proposition expressed by a clause of the utterance.
    Asserted,
    /// Question-asking or order-giving act, e.g. "A asks B if ...".
    SpeechAct,
    /// Fully fledged negation built from an elliptical negative answer.
    DerivedNegation,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Asserted => "asserted",
            EventKind::SpeechAct => "speech_act",
            EventKind::DerivedNegation => "derived_negation",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asserted" => Ok(EventKind::Asserted),
            "speech_act" => Ok(EventKind::SpeechAct),
            "derived_negation" => Ok(EventKind::DerivedNegation),
            other => Err(ModelError::UnknownEventKind(other.to_string())),
        }
    }
}

/// An anaphora-resolved proposition extracted from an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub id: EventId,
    pub text: String,
    pub source_utterance: UtteranceIndex,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negates: Option<EventId>,
}

impl Event {
    pub fn asserted(id: &str, text: &str, source: UtteranceIndex) -> Self {
        Event {
            id: id.into(),
            text: text.to_string(),
            source_utterance: source,
            kind: EventKind::Asserted,
            negates: None,
        }
    }

    pub fn speech_act(id: &str, text: &str, source: UtteranceIndex) -> Self {
        Event {
            kind: EventKind::SpeechAct,
            ..Event::asserted(id, text, source)
        }
    }

    pub fn negation_of(id: &str, text: &str, source: UtteranceIndex, negates: &str) -> Self {
        Event {
            kind: EventKind::DerivedNegation,
            negates: Some(negates.into()),
            ..Event::asserted(id, text, source)
        }
    }
}

/// Belief of a speaker towards an event. `Null` is the corpus "0" cell: no
/// annotation at all, which is distinct from `Nb` (annotated as expressing
/// no belief).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeliefLabel {
    CtPlus,
    CtMinus,
    Ps,
    Nb,
    Null,
}

impl BeliefLabel {
    pub const ALL: [BeliefLabel; 5] = [
        BeliefLabel::CtPlus,
        BeliefLabel::CtMinus,
        BeliefLabel::Ps,
        BeliefLabel::Nb,
        BeliefLabel::Null,
    ];

    pub fn token(self) -> &'static str {
        match self {
            BeliefLabel::CtPlus => "CT+",
            BeliefLabel::CtMinus => "CT-",
            BeliefLabel::Ps => "PS",
            BeliefLabel::Nb => "NB",
            BeliefLabel::Null => "0",
        }
    }

    pub fn is_null(self) -> bool {
        self == BeliefLabel::Null
    }
}

impl fmt::Display for BeliefLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BeliefLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BeliefLabel::ALL
            .into_iter()
            .find(|l| l.token() == s)
            .ok_or_else(|| ModelError::UnknownLabel(s.to_string()))
    }
}

/// Certainty rank: CT+ = 3, PS = 2, NB = 1. CT- is a polarity rather than a
/// degree and Null is not a judgment, so neither is ranked.
pub fn certainty_rank(label: BeliefLabel) -> Result<u8, ModelError> {
    match label {
        BeliefLabel::CtPlus => Ok(3),
        BeliefLabel::Ps => Ok(2),
        BeliefLabel::Nb => Ok(1),
        BeliefLabel::CtMinus | BeliefLabel::Null => Err(ModelError::UnrankedLabel(label)),
    }
}

/// Degree of a common-ground entry; restricted to the two belief levels a
/// JA/IN entry may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CgDegree {
    CtPlus,
    Ps,
}

impl CgDegree {
    pub fn as_belief(self) -> BeliefLabel {
        match self {
            CgDegree::CtPlus => BeliefLabel::CtPlus,
            CgDegree::Ps => BeliefLabel::Ps,
        }
    }

    pub fn from_belief(label: BeliefLabel) -> Option<CgDegree> {
        match label {
            BeliefLabel::CtPlus => Some(CgDegree::CtPlus),
            BeliefLabel::Ps => Some(CgDegree::Ps),
            _ => None,
        }
    }
}

impl fmt::Display for CgDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.as_belief().fmt(f)
    }
}

/// The degree of a jointly held belief is the less certain of the two
/// speakers' beliefs. Both inputs must be CT+ or PS.
pub fn cg_degree(bel_a: BeliefLabel, bel_b: BeliefLabel) -> Result<CgDegree, ModelError> {
    let (Some(a), Some(b)) = (CgDegree::from_belief(bel_a), CgDegree::from_belief(bel_b)) else {
        return Err(ModelError::DegreeUndefined(bel_a, bel_b));
    };
    let rank_a = certainty_rank(a.as_belief())?;
    let rank_b = certainty_rank(b.as_belief())?;
    Ok(if rank_a <= rank_b { a } else { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CgKind {
    Ja,
    In,
    Rt,
    Null,
}

impl CgKind {
    pub const ALL: [CgKind; 4] = [CgKind::Ja, CgKind::In, CgKind::Rt, CgKind::Null];

    pub fn token(self) -> &'static str {
        match self {
            CgKind::Ja => "JA",
            CgKind::In => "IN",
            CgKind::Rt => "RT",
            CgKind::Null => "0",
        }
    }
}

impl fmt::Display for CgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Common-ground label as seen from one speaker. JA and IN may carry the
/// degree of the shared belief; RT and Null never do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CgLabel {
    Ja(Option<CgDegree>),
    In(Option<CgDegree>),
    Rt,
    Null,
}

impl CgLabel {
    pub fn kind(self) -> CgKind {
        match self {
            CgLabel::Ja(_) => CgKind::Ja,
            CgLabel::In(_) => CgKind::In,
            CgLabel::Rt => CgKind::Rt,
            CgLabel::Null => CgKind::Null,
        }
    }

    pub fn degree(self) -> Option<CgDegree> {
        match self {
            CgLabel::Ja(d) | CgLabel::In(d) => d,
            CgLabel::Rt | CgLabel::Null => None,
        }
    }

    pub fn is_null(self) -> bool {
        self == CgLabel::Null
    }

    pub fn from_kind(kind: CgKind, degree: Option<CgDegree>) -> CgLabel {
        match kind {
            CgKind::Ja => CgLabel::Ja(degree),
            CgKind::In => CgLabel::In(degree),
            CgKind::Rt => CgLabel::Rt,
            CgKind::Null => CgLabel::Null,
        }
    }
}

impl fmt::Display for CgLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.degree() {
            Some(d) => write!(f, "{}({})", self.kind(), d),
            None => f.write_str(self.kind().token()),
        }
    }
}

impl FromStr for CgLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ModelError::UnknownLabel(s.to_string());
        let (head, degree) = match s.split_once('(') {
            Some((head, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(unknown)?;
                let belief: BeliefLabel = inner.parse().map_err(|_| unknown())?;
                (head, Some(CgDegree::from_belief(belief).ok_or_else(unknown)?))
            }
            None => (s, None),
        };
        let kind = CgKind::ALL
            .into_iter()
            .find(|k| k.token() == head)
            .ok_or_else(unknown)?;
        if degree.is_some() && !matches!(kind, CgKind::Ja | CgKind::In) {
            return Err(unknown());
        }
        Ok(CgLabel::from_kind(kind, degree))
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Speaker);
string_serde!(BeliefLabel);
string_serde!(CgLabel);

/// A speaker's belief towards an event. `evidence_at` is the utterance that
/// revealed the judgment; `effective_from` is when it started holding, which
/// may be earlier when the annotator looked ahead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefRecord {
    pub event: EventId,
    pub speaker: Speaker,
    pub label: BeliefLabel,
    pub effective_from: UtteranceIndex,
    pub evidence_at: UtteranceIndex,
}

impl BeliefRecord {
    pub fn new(
        event: &str,
        speaker: Speaker,
        label: BeliefLabel,
        effective_from: UtteranceIndex,
        evidence_at: UtteranceIndex,
    ) -> Self {
        BeliefRecord {
            event: event.into(),
            speaker,
            label,
            effective_from,
            evidence_at,
        }
    }
}

/// A common-ground judgment in `speaker`'s model of the conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgRecord {
    pub event: EventId,
    pub speaker: Speaker,
    pub label: CgLabel,
    pub at: UtteranceIndex,
}

impl CgRecord {
    pub fn new(event: &str, speaker: Speaker, label: CgLabel, at: UtteranceIndex) -> Self {
        CgRecord {
            event: event.into(),
            speaker,
            label,
            at,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BeliefLabel::*;

    #[test]
    fn ranks() {
        assert_eq!(certainty_rank(CtPlus), Ok(3));
        assert_eq!(certainty_rank(Ps), Ok(2));
        assert_eq!(certainty_rank(Nb), Ok(1));
        assert_eq!(certainty_rank(CtMinus), Err(ModelError::UnrankedLabel(CtMinus)));
        assert!(certainty_rank(Null).is_err());
        assert_eq!(ModelError::UnrankedLabel(CtMinus).to_string(), "unranked label: CT-");
    }

    #[test]
    fn degree_is_less_certain_and_commutative() {
        assert_eq!(cg_degree(Ps, CtPlus), Ok(CgDegree::Ps));
        assert_eq!(cg_degree(CtPlus, Ps), Ok(CgDegree::Ps));
        assert_eq!(cg_degree(CtPlus, CtPlus), Ok(CgDegree::CtPlus));
        for x in [CtPlus, Ps] {
            for y in [CtPlus, Ps] {
                assert_eq!(cg_degree(x, y), cg_degree(y, x));
            }
        }
        for bad in [CtMinus, Nb, Null] {
            assert!(cg_degree(bad, CtPlus).is_err());
            assert!(cg_degree(Ps, bad).is_err());
        }
    }

    #[test]
    fn label_tokens_are_closed() {
        for l in BeliefLabel::ALL {
            assert_eq!(l.token().parse::<BeliefLabel>(), Ok(l));
        }
        for bad in ["CT?", "ct+", "", "JA", "null"] {
            assert!(bad.parse::<BeliefLabel>().is_err(), "{bad}");
        }
        for tok in ["JA", "IN", "RT", "0", "JA(PS)", "IN(CT+)", "JA(CT+)"] {
            assert_eq!(tok.parse::<CgLabel>().unwrap().to_string(), tok);
        }
        for bad in ["RT(PS)", "JA(NB)", "JA(CT-)", "JA(PS", "XX", "0(PS)", "ja"] {
            assert!(bad.parse::<CgLabel>().is_err(), "{bad}");
        }
    }

    #[test]
    fn event_constructors_link_negation() {
        let e3 = Event::negation_of("e3", "B has not been leading the life of Reilly", 2, "e2");
        assert_eq!(e3.kind, EventKind::DerivedNegation);
        assert_eq!(e3.negates, Some(EventId::from("e2")));
        assert_eq!(Event::speech_act("e1", "x", 1).negates, None);
    }
}
