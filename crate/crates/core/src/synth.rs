//! Random valid dialogues, for load tests and round-trip checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::{DialogueState, Mutation, Record};
use crate::model::{
    BeliefLabel, BeliefRecord, CgDegree, CgLabel, CgRecord, Event, EventKind, Speaker,
    UtteranceIndex,
};

const WORDS: &[&str] = &[
    "A", "B", "thinks", "went", "home", "the", "party", "was", "fun", "sleeps", "likes", "Reilly",
    "tea", "school", "never", "called", "back", "yesterday", "works", "late",
];

fn sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=7);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn speaker<R: Rng + ?Sized>(rng: &mut R) -> Speaker {
    if rng.gen_bool(0.5) {
        Speaker::A
    } else {
        Speaker::B
    }
}

fn last_time(state: &DialogueState, record: &Record) -> Option<UtteranceIndex> {
    let same = |r: &&Record| match (r, record) {
        (Record::Belief(x), Record::Belief(y)) => x.event == y.event && x.speaker == y.speaker,
        (Record::Cg(x), Record::Cg(y)) => x.event == y.event && x.speaker == y.speaker,
        _ => false,
    };
    state.records().iter().filter(same).map(|r| match r {
        Record::Belief(b) => b.evidence_at,
        Record::Cg(c) => c.at,
    }).max()
}

/// Draws one mutation that is valid against `state`.
pub fn random_mutation<R: Rng + ?Sized>(rng: &mut R, state: &DialogueState) -> Mutation {
    let last = state.last_index();
    let roll: f64 = rng.gen();
    if last == 0 || roll < 0.2 {
        return Mutation::AddUtterance {
            speaker: speaker(rng),
            text: sentence(rng),
        };
    }
    if state.events().is_empty() || roll < 0.45 {
        let id = format!("e{}", state.events().len() + 1);
        let source = rng.gen_range(1..=last);
        let earlier: Vec<_> = state
            .events()
            .iter()
            .filter(|e| e.source_utterance <= source)
            .collect();
        let event = match earlier.choose(rng) {
            Some(target) if rng.gen_bool(0.15) => {
                Event::negation_of(&id, &format!("not {}", target.text), source, target.id.as_str())
            }
            _ if rng.gen_bool(0.2) => Event::speech_act(&id, &sentence(rng), source),
            _ => Event::asserted(&id, &sentence(rng), source),
        };
        debug_assert!(event.kind != EventKind::DerivedNegation || event.negates.is_some());
        return Mutation::AddEvent(event);
    }
    let event = state.events().choose(rng).unwrap().clone();
    let sp = speaker(rng);
    let record = if roll < 0.8 {
        let label = *[BeliefLabel::CtPlus, BeliefLabel::CtMinus, BeliefLabel::Ps, BeliefLabel::Nb]
            .choose(rng)
            .unwrap();
        Record::Belief(BeliefRecord {
            event: event.id.clone(),
            speaker: sp,
            label,
            effective_from: 0,
            evidence_at: 0,
        })
    } else {
        let degree = [None, Some(CgDegree::CtPlus), Some(CgDegree::Ps)];
        let label = match rng.gen_range(0..3) {
            0 => CgLabel::Ja(*degree.choose(rng).unwrap()),
            1 => CgLabel::In(*degree.choose(rng).unwrap()),
            _ => CgLabel::Rt,
        };
        Record::Cg(CgRecord {
            event: event.id.clone(),
            speaker: sp,
            label,
            at: 0,
        })
    };
    let floor = last_time(state, &record).map_or(event.source_utterance, |t| t + 1);
    if floor > last {
        return Mutation::AddUtterance {
            speaker: speaker(rng),
            text: sentence(rng),
        };
    }
    let at = rng.gen_range(floor..=last);
    match record {
        Record::Belief(mut b) => {
            b.evidence_at = at;
            b.effective_from = if rng.gen_bool(0.3) { event.source_utterance } else { at };
            Mutation::RecordBelief(b)
        }
        Record::Cg(mut c) => {
            c.at = at;
            Mutation::RecordCg(c)
        }
    }
}

/// `n` mutations that replay cleanly from an empty dialogue.
pub fn random_mutations<R: Rng + ?Sized>(rng: &mut R, id: &str, n: usize) -> Vec<Mutation> {
    let mut state = DialogueState::new(id);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let m = random_mutation(rng, &state);
        state
            .apply(m.clone())
            .expect("generated mutations are valid");
        out.push(m);
    }
    out
}

pub fn random_dialogue<R: Rng + ?Sized>(rng: &mut R, id: &str, n: usize) -> DialogueState {
    DialogueState::replay(id, random_mutations(rng, id, n)).expect("generated mutations are valid")
}
