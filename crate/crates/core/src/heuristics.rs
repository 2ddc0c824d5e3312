//! Rule-based common-ground classifier.
//!
//! Gold beliefs of both speakers decide between rejection, "no CG" and an
//! under-determined JA/IN outcome. The JA/IN ambiguity is resolved against a
//! dialog memory of all preceding events: a target whose text is more
//! similar than a threshold to some earlier event is taken to be already in
//! the common ground (IN), otherwise it is newly added (JA). The same label
//! is predicted for both speakers.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{DialogueState, EngineError, Mutation, Record};
use crate::model::{
    cg_degree, BeliefLabel, CgDegree, CgKind, CgLabel, CgRecord, Event, EventId, Speaker,
    UtteranceIndex,
};
use crate::similarity::{SimilarityError, SimilarityProvider};

/// Default JA/IN similarity threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.92;

/// Threshold grid for sweeps.
pub const SWEEP_GRID: [f64; 9] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.92, 0.95, 1.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeuristicError {
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "decision", content = "degree")]
pub enum RuleOutcome {
    #[serde(rename = "RT")]
    Rt,
    #[serde(rename = "JA_or_IN", serialize_with = "ser_degree")]
    JaOrIn(CgDegree),
    #[serde(rename = "NULL")]
    Null,
}

fn ser_degree<S: serde::Serializer>(d: &CgDegree, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(d)
}

/// Which rule produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Either belief is CT-.
    Rejection,
    /// CT+ / CT+.
    BothCertain,
    /// PS / CT+.
    APossible,
    /// CT+ / PS.
    BPossible,
    /// Either belief is NB.
    NoBelief,
    /// Either belief is unannotated.
    Unannotated,
    /// PS / PS, outside rules 1-5; extended symmetrically.
    BothPossible,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Rejection => "rule 1 (CT-)",
            Rule::BothCertain => "rule 2 (CT+/CT+)",
            Rule::APossible => "rule 3 (PS/CT+)",
            Rule::BPossible => "rule 4 (CT+/PS)",
            Rule::NoBelief => "rule 5 (NB)",
            Rule::Unannotated => "unannotated belief",
            Rule::BothPossible => "PS/PS extension",
        })
    }
}

/// Evaluates the rules in order; the first match wins.
pub fn classify(bel_a: BeliefLabel, bel_b: BeliefLabel) -> (RuleOutcome, Rule) {
    use BeliefLabel::*;
    match (bel_a, bel_b) {
        (CtMinus, _) | (_, CtMinus) => (RuleOutcome::Rt, Rule::Rejection),
        (CtPlus, CtPlus) => (RuleOutcome::JaOrIn(CgDegree::CtPlus), Rule::BothCertain),
        (Ps, CtPlus) => (RuleOutcome::JaOrIn(CgDegree::Ps), Rule::APossible),
        (CtPlus, Ps) => (RuleOutcome::JaOrIn(CgDegree::Ps), Rule::BPossible),
        (Nb, _) | (_, Nb) => (RuleOutcome::Null, Rule::NoBelief),
        (Null, _) | (_, Null) => (RuleOutcome::Null, Rule::Unannotated),
        (Ps, Ps) => (RuleOutcome::JaOrIn(CgDegree::Ps), Rule::BothPossible),
    }
}

pub fn apply_rules(bel_a: BeliefLabel, bel_b: BeliefLabel) -> RuleOutcome {
    classify(bel_a, bel_b).0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryEntry {
    pub text: String,
    pub event: EventId,
    pub bel_a: BeliefLabel,
    pub bel_b: BeliefLabel,
    pub cg_a: CgLabel,
    pub cg_b: CgLabel,
    pub position: usize,
}

/// Preceding events with their beliefs and CG labels, in processing order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DialogMemory {
    entries: Vec<MemoryEntry>,
}

impl DialogMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        event: &Event,
        beliefs: (BeliefLabel, BeliefLabel),
        cg: (CgLabel, CgLabel),
    ) {
        let position = self.entries.len();
        self.entries.push(MemoryEntry {
            text: event.text.clone(),
            event: event.id.clone(),
            bel_a: beliefs.0,
            bel_b: beliefs.1,
            cg_a: cg.0,
            cg_b: cg.1,
            position,
        });
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JaOrIn {
    #[serde(rename = "JA")]
    Ja,
    #[serde(rename = "IN")]
    In,
}

/// Result of a memory search: the decision and the closest entry, if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub decision: JaOrIn,
    pub best_match: Option<MemoryMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryMatch {
    pub event: EventId,
    pub text: String,
    pub similarity: f64,
}

fn check_threshold(threshold: f64) -> Result<(), HeuristicError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(HeuristicError::Threshold(threshold));
    }
    Ok(())
}

/// IN iff some memory entry is strictly more similar than `threshold`.
pub fn resolve_ja_in<P>(
    target: &Event,
    memory: &DialogMemory,
    f: &P,
    threshold: f64,
) -> Result<Resolution, HeuristicError>
where
    P: SimilarityProvider + ?Sized,
{
    check_threshold(threshold)?;
    let mut best: Option<MemoryMatch> = None;
    for entry in memory.entries() {
        let s = f.similarity(&target.text, &entry.text)?;
        if best.as_ref().is_none_or(|b| s > b.similarity) {
            best = Some(MemoryMatch {
                event: entry.event.clone(),
                text: entry.text.clone(),
                similarity: s,
            });
        }
    }
    let decision = match &best {
        Some(m) if m.similarity > threshold => JaOrIn::In,
        _ => JaOrIn::Ja,
    };
    Ok(Resolution {
        decision,
        best_match: best,
    })
}

/// Which gold beliefs feed the rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeliefMode {
    /// Beliefs after every revision, as annotated at the end of the dialogue.
    #[default]
    Final,
    /// Beliefs holding at the event's own utterance.
    Turn,
}

impl FromStr for BeliefMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final" => Ok(BeliefMode::Final),
            "turn" => Ok(BeliefMode::Turn),
            other => Err(format!("unknown belief mode {other:?} (expected final|turn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicConfig {
    pub threshold: f64,
    pub beliefs: BeliefMode,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            threshold: DEFAULT_THRESHOLD,
            beliefs: BeliefMode::Final,
        }
    }
}

impl HeuristicConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        HeuristicConfig {
            threshold,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventPrediction {
    pub event: EventId,
    pub bel_a: BeliefLabel,
    pub bel_b: BeliefLabel,
    pub rule: Rule,
    pub outcome: RuleOutcome,
    /// Label predicted for both speakers; Null when no record is emitted.
    pub label: CgLabel,
    pub at: UtteranceIndex,
    pub best_match: Option<MemoryMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub dialogue: String,
    pub events: Vec<EventPrediction>,
    /// Events decided by the PS/PS extension rather than rules 1-5.
    pub extension_audit: Vec<EventId>,
}

impl Prediction {
    /// CG records for both speakers, in event processing order.
    pub fn records(&self) -> Vec<CgRecord> {
        self.events
            .iter()
            .filter(|p| !p.label.is_null())
            .flat_map(|p| {
                Speaker::BOTH.map(|sp| CgRecord {
                    event: p.event.clone(),
                    speaker: sp,
                    label: p.label,
                    at: p.at,
                })
            })
            .collect()
    }

    pub fn count(&self, kind: CgKind) -> usize {
        self.events.iter().filter(|p| p.label.kind() == kind).count()
    }
}

/// Predicts CG labels for every event of `state` from its gold beliefs.
pub fn predict_dialogue<P>(
    state: &DialogueState,
    f: &P,
    config: HeuristicConfig,
) -> Result<Prediction, HeuristicError>
where
    P: SimilarityProvider + ?Sized,
{
    check_threshold(config.threshold)?;
    let events = state.events_in_dialogue_order();
    let texts: Vec<&str> = events.iter().map(|e| e.text.as_str()).collect();
    f.prepare(&texts)?;

    let mut memory = DialogMemory::new();
    let mut out = Vec::with_capacity(events.len());
    let mut audit = Vec::new();
    for event in events {
        let (bel_a, bel_b, at) = match config.beliefs {
            BeliefMode::Final => {
                // Record at the first utterance from which both final beliefs hold.
                let from = Speaker::BOTH
                    .into_iter()
                    .filter_map(|sp| state.final_belief_effective_from(&event.id, sp))
                    .max()
                    .unwrap_or(event.source_utterance);
                (
                    state.final_belief(&event.id, Speaker::A)?,
                    state.final_belief(&event.id, Speaker::B)?,
                    from.max(event.source_utterance),
                )
            }
            BeliefMode::Turn => (
                state.belief_at(&event.id, Speaker::A, event.source_utterance)?,
                state.belief_at(&event.id, Speaker::B, event.source_utterance)?,
                event.source_utterance,
            ),
        };
        let (outcome, rule) = classify(bel_a, bel_b);
        if rule == Rule::BothPossible {
            audit.push(event.id.clone());
        }
        let (label, best_match) = match outcome {
            RuleOutcome::Rt => (CgLabel::Rt, None),
            RuleOutcome::Null => (CgLabel::Null, None),
            RuleOutcome::JaOrIn(degree) => {
                debug_assert_eq!(cg_degree(bel_a, bel_b).ok(), Some(degree));
                let r = resolve_ja_in(event, &memory, f, config.threshold)?;
                let label = match r.decision {
                    JaOrIn::Ja => CgLabel::Ja(Some(degree)),
                    JaOrIn::In => CgLabel::In(Some(degree)),
                };
                (label, r.best_match)
            }
        };
        memory.push(event, (bel_a, bel_b), (label, label));
        out.push(EventPrediction {
            event: event.id.clone(),
            bel_a,
            bel_b,
            rule,
            outcome,
            label,
            at,
            best_match,
        });
    }
    Ok(Prediction {
        dialogue: state.id().to_string(),
        events: out,
        extension_audit: audit,
    })
}

/// `gold` with its CG records replaced by the predicted ones.
pub fn apply_prediction(
    gold: &DialogueState,
    prediction: &Prediction,
) -> Result<DialogueState, EngineError> {
    let kept = gold
        .mutations()
        .into_iter()
        .filter(|m| !matches!(m, Mutation::RecordCg(_)));
    let predicted = prediction.records().into_iter().map(Mutation::RecordCg);
    DialogueState::replay(gold.id(), kept.chain(predicted))
}

/// Non-binding suggestion for one event using the current annotations: the
/// memory holds every event preceding it in dialogue order together with
/// its annotated beliefs and CG labels.
pub fn suggest<P>(
    state: &DialogueState,
    event: &EventId,
    f: &P,
    threshold: f64,
) -> Result<Suggestion, HeuristicError>
where
    P: SimilarityProvider + ?Sized,
{
    check_threshold(threshold)?;
    let target = state
        .event(event)
        .ok_or_else(|| EngineError::UnknownEvent(event.clone()))?;
    let bel_a = state.final_belief(event, Speaker::A)?;
    let bel_b = state.final_belief(event, Speaker::B)?;
    let (outcome, rule) = classify(bel_a, bel_b);
    let mut memory = DialogMemory::new();
    for e in state.events_in_dialogue_order() {
        if &e.id == event {
            break;
        }
        memory.push(
            e,
            (state.final_belief(&e.id, Speaker::A)?, state.final_belief(&e.id, Speaker::B)?),
            (state.final_cg(&e.id, Speaker::A)?, state.final_cg(&e.id, Speaker::B)?),
        );
    }
    let (label, best_match) = match outcome {
        RuleOutcome::Rt => (CgLabel::Rt, None),
        RuleOutcome::Null => (CgLabel::Null, None),
        RuleOutcome::JaOrIn(d) => {
            let r = resolve_ja_in(target, &memory, f, threshold)?;
            let label = match r.decision {
                JaOrIn::Ja => CgLabel::Ja(Some(d)),
                JaOrIn::In => CgLabel::In(Some(d)),
            };
            (label, r.best_match)
        }
    };
    Ok(Suggestion {
        event: event.clone(),
        decision: match label.kind() {
            CgKind::Null => "NULL".to_string(),
            k => k.token().to_string(),
        },
        label: label.to_string(),
        rule,
        outcome,
        bel_a,
        bel_b,
        best_match,
        threshold,
        binding: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub event: EventId,
    /// `RT`, `JA`, `IN` or `NULL`.
    pub decision: String,
    pub label: String,
    pub rule: Rule,
    pub outcome: RuleOutcome,
    #[serde(serialize_with = "ser_display")]
    pub bel_a: BeliefLabel,
    #[serde(serialize_with = "ser_display")]
    pub bel_b: BeliefLabel,
    pub best_match: Option<MemoryMatch>,
    pub threshold: f64,
    pub binding: bool,
}

fn ser_display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Number of CG records of `state` (both speakers) whose label is `kind`.
pub fn count_records(state: &DialogueState, kind: CgKind) -> usize {
    state
        .records()
        .iter()
        .filter(|r| matches!(r, Record::Cg(c) if c.label.kind() == kind))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::tests::reilly;
    use crate::model::BeliefRecord;
    use crate::similarity::LexicalSimilarity;
    use BeliefLabel::*;

    #[test]
    fn rule_examples() {
        assert_eq!(apply_rules(CtMinus, CtMinus), RuleOutcome::Rt);
        assert_eq!(apply_rules(CtPlus, CtPlus), RuleOutcome::JaOrIn(CgDegree::CtPlus));
        assert_eq!(apply_rules(Nb, CtPlus), RuleOutcome::Null);
        assert_eq!(apply_rules(CtMinus, Nb), RuleOutcome::Rt);
        assert_eq!(apply_rules(Null, CtMinus), RuleOutcome::Rt);
        assert_eq!(apply_rules(Ps, Ps), RuleOutcome::JaOrIn(CgDegree::Ps));
        assert_eq!(classify(Ps, Ps).1, Rule::BothPossible);
    }

    fn event(text: &str) -> Event {
        Event::asserted("t", text, 1)
    }

    #[test]
    fn resolve_examples() {
        let f = LexicalSimilarity;
        let empty = DialogMemory::new();
        for th in [0.0, 0.5, 1.0] {
            assert_eq!(resolve_ja_in(&event("x"), &empty, &f, th).unwrap().decision, JaOrIn::Ja);
        }
        let mut mem = DialogMemory::new();
        mem.push(&Event::asserted("e1", "B sleeps late", 1), (CtPlus, CtPlus), (CgLabel::Ja(None), CgLabel::Ja(None)));
        let r = resolve_ja_in(&event("B sleeps late"), &mem, &f, 0.92).unwrap();
        assert_eq!(r.decision, JaOrIn::In);
        assert_eq!(r.best_match.unwrap().similarity, 1.0);

        // 9 shared tokens out of a 10-token union: Jaccard 0.9
        let mut mem = DialogMemory::new();
        mem.push(
            &Event::asserted("e1", "t1 t2 t3 t4 t5 t6 t7 t8 t9", 1),
            (CtPlus, CtPlus),
            (CgLabel::Ja(None), CgLabel::Ja(None)),
        );
        let target = event("t1 t2 t3 t4 t5 t6 t7 t8 t9 t10");
        let r = resolve_ja_in(&target, &mem, &f, 0.92).unwrap();
        assert_eq!(r.best_match.as_ref().unwrap().similarity, 0.9);
        assert_eq!(r.decision, JaOrIn::Ja);
        assert_eq!(resolve_ja_in(&target, &mem, &f, 0.9).unwrap().decision, JaOrIn::Ja);
        assert_eq!(resolve_ja_in(&target, &mem, &f, 0.89).unwrap().decision, JaOrIn::In);
        assert_eq!(
            resolve_ja_in(&target, &mem, &f, 1.5),
            Err(HeuristicError::Threshold(1.5))
        );
    }

    #[test]
    fn reilly_prediction() {
        let gold = reilly();
        let p = predict_dialogue(&gold, &LexicalSimilarity, HeuristicConfig::default()).unwrap();
        let got: Vec<_> = p.events.iter().map(|e| (e.event.to_string(), e.label.kind(), e.at)).collect();
        assert_eq!(
            got,
            vec![
                ("e1".into(), CgKind::Ja, 1),
                ("e2".into(), CgKind::Rt, 2),
                ("e3".into(), CgKind::Ja, 2),
            ]
        );
        assert_eq!(p.records().len(), 6);
        let predicted = apply_prediction(&gold, &p).unwrap();
        assert_eq!(predicted.validate(), vec![]);
    }

    #[test]
    fn verbatim_repeat_becomes_in() {
        let mut s = DialogueState::new("rep");
        s.add_utterance(Speaker::A, "You sleep late.").unwrap();
        s.add_utterance(Speaker::B, "I do.").unwrap();
        s.add_utterance(Speaker::A, "Right, you sleep late.").unwrap();
        s.add_event(Event::asserted("e1", "B sleeps late", 1)).unwrap();
        s.add_event(Event::asserted("e2", "A likes tea", 2)).unwrap();
        s.add_event(Event::asserted("e3", "B sleeps late", 3)).unwrap();
        for (e, t) in [("e1", 1), ("e2", 2), ("e3", 3)] {
            for sp in Speaker::BOTH {
                s.record_belief(BeliefRecord::new(e, sp, CtPlus, t, t)).unwrap();
            }
        }
        let p = predict_dialogue(&s, &LexicalSimilarity, HeuristicConfig::default()).unwrap();
        let kinds: Vec<_> = p.events.iter().map(|e| e.label.kind()).collect();
        assert_eq!(kinds, vec![CgKind::Ja, CgKind::Ja, CgKind::In]);
        let strict = predict_dialogue(&s, &LexicalSimilarity, HeuristicConfig::with_threshold(1.0)).unwrap();
        assert_eq!(strict.count(CgKind::In), 0);
        // IN at utterance 3 after an earlier JA on the same text is clean
        assert!(apply_prediction(&s, &p).unwrap().validate().is_empty());
    }

    #[test]
    fn turn_mode_uses_beliefs_at_source() {
        let mut s = DialogueState::new("turn");
        s.add_utterance(Speaker::A, "Maybe it rains?").unwrap();
        s.add_utterance(Speaker::B, "It does.").unwrap();
        s.add_event(Event::asserted("e1", "it rains", 1)).unwrap();
        s.record_belief(BeliefRecord::new("e1", Speaker::A, Nb, 1, 1)).unwrap();
        s.record_belief(BeliefRecord::new("e1", Speaker::B, CtPlus, 1, 2)).unwrap();
        s.record_belief(BeliefRecord::new("e1", Speaker::A, CtPlus, 2, 2)).unwrap();
        let fin = predict_dialogue(&s, &LexicalSimilarity, HeuristicConfig::default()).unwrap();
        assert_eq!((fin.events[0].label.kind(), fin.events[0].at), (CgKind::Ja, 2));
        let turn = predict_dialogue(
            &s,
            &LexicalSimilarity,
            HeuristicConfig {
                beliefs: BeliefMode::Turn,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(turn.events[0].label, CgLabel::Null);
        assert!(apply_prediction(&s, &fin).unwrap().validate().iter().all(|d| d.code.severity() != crate::engine::Severity::Error));
    }

    #[test]
    fn ps_ps_is_audited() {
        let mut s = DialogueState::new("psps");
        s.add_utterance(Speaker::A, "Maybe?").unwrap();
        s.add_event(Event::asserted("e1", "it may rain", 1)).unwrap();
        for sp in Speaker::BOTH {
            s.record_belief(BeliefRecord::new("e1", sp, Ps, 1, 1)).unwrap();
        }
        let p = predict_dialogue(&s, &LexicalSimilarity, HeuristicConfig::default()).unwrap();
        assert_eq!(p.extension_audit, vec![EventId::from("e1")]);
        assert_eq!(p.events[0].label, CgLabel::Ja(Some(CgDegree::Ps)));
    }

    #[test]
    fn suggestion_for_rejected_event() {
        let s = reilly();
        let sug = suggest(&s, &EventId::from("e2"), &LexicalSimilarity, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(sug.decision, "RT");
        assert!(!sug.binding);
        let json = serde_json::to_value(&sug).unwrap();
        assert_eq!(json["decision"], "RT");
        assert_eq!(json["outcome"]["decision"], "RT");
        assert!(suggest(&s, &EventId::from("e9"), &LexicalSimilarity, 0.5).is_err());
    }
}
