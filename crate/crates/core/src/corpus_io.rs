//! Corpus file formats.
//!
//! | extension   | content                                            |
//! |-------------|----------------------------------------------------|
//! | `.txt`      | transcript, one `A: ...` / `B: ...` line per turn  |
//! | `.cga.tsv`  | annotation grid (utterances, events, labels)       |
//! | `.cg.json`  | canonical dialogue document                        |
//! | `.pred.tsv` | predicted labels per event                         |
//! | `.events`   | event list for EMBERT, optionally grouped          |
//!
//! The annotation grid has one row per event (or one event-less row for an
//! utterance without events). Label cells hold `LABEL eID` pairs. A belief
//! label printed on a later row than its event is a revision that holds from
//! that row; the suffix `!` (e.g. `CT-! e2`) back-dates it to the event's
//! own utterance instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DialogueState, EngineError, Record};
use crate::model::{
    BeliefLabel, BeliefRecord, CgLabel, CgRecord, Event, EventId, EventKind, Speaker, Utterance,
    UtteranceIndex,
};

pub const DOCUMENT_FORMAT: &str = "cgw-dialogue/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}, column {column}: {message}")]
    Cell {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("at {pointer:?}: {message}")]
    Json { pointer: String, message: String },
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

fn line_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Line {
        line,
        message: message.into(),
    }
}

fn cell_err(line: usize, column: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Cell {
        line,
        column,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// transcripts

pub fn parse_transcript(text: &str) -> Result<Vec<Utterance>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let Some((speaker, rest)) = line.split_once(':') else {
            return Err(line_err(line_no, "expected `A: text` or `B: text`"));
        };
        let speaker: Speaker = speaker
            .parse()
            .map_err(|_| line_err(line_no, format!("unknown speaker at line {line_no}")))?;
        let text = rest
            .strip_prefix(' ')
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| line_err(line_no, "empty utterance"))?;
        out.push(Utterance {
            index: out.len() as UtteranceIndex + 1,
            speaker,
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn write_transcript(utterances: &[Utterance]) -> String {
    utterances
        .iter()
        .map(|u| format!("{}: {}\n", u.speaker, u.text))
        .collect()
}

/// A dialogue holding only the utterances of a transcript.
pub fn state_from_transcript(id: &str, text: &str) -> Result<DialogueState, CorpusError> {
    let mut state = DialogueState::new(id);
    for u in parse_transcript(text)? {
        state
            .add_utterance(u.speaker, u.text)
            .map_err(|e| line_err(u.index as usize, e.to_string()))?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// annotation grid

const TSV_COLUMNS: [&str; 10] = [
    "Nb", "Utterance", "e_id", "Event", "Bel(A)", "Bel(B)", "CG(A)", "CG(B)", "Kind", "Negates",
];

/// A row of the annotation grid, after tokenizing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub utterance_nb: UtteranceIndex,
    /// Set on the first row of an utterance.
    pub utterance: Option<(Speaker, String)>,
    pub event: Option<Event>,
    pub bel_a: Vec<(String, EventId)>,
    pub bel_b: Vec<(String, EventId)>,
    pub cg_a: Vec<(String, EventId)>,
    pub cg_b: Vec<(String, EventId)>,
}

fn parse_pairs(cell: &str, line: usize, column: usize) -> Result<Vec<(String, EventId)>, CorpusError> {
    let tokens: Vec<&str> = cell.split_whitespace().collect();
    if !tokens.len().is_multiple_of(2) {
        return Err(cell_err(line, column, format!("expected `LABEL eID` pairs, got {cell:?}")));
    }
    Ok(tokens
        .chunks(2)
        .map(|c| (c[0].to_string(), EventId::from(c[1])))
        .collect())
}

fn parse_row(fields: &[&str], line: usize, full: bool) -> Result<AnnotationRow, CorpusError> {
    let nb: UtteranceIndex = fields[0]
        .trim()
        .parse()
        .map_err(|_| cell_err(line, 1, format!("bad utterance number {:?}", fields[0])))?;
    let utterance = if fields[1].is_empty() {
        None
    } else {
        let (sp, text) = fields[1]
            .split_once(": ")
            .ok_or_else(|| cell_err(line, 2, "expected `A: text` or `B: text`"))?;
        let sp: Speaker = sp
            .parse()
            .map_err(|_| cell_err(line, 2, format!("unknown speaker {sp:?}")))?;
        Some((sp, text.to_string()))
    };
    let (kind_cell, negates_cell) = if full { (fields[8], fields[9]) } else { ("", "") };
    let event = match (fields[2].is_empty(), fields[3].is_empty()) {
        (true, true) => {
            if !kind_cell.is_empty() || !negates_cell.is_empty() {
                return Err(cell_err(line, 9, "kind/negates given without an event"));
            }
            None
        }
        (false, false) => {
            let negates = (!negates_cell.is_empty()).then(|| EventId::from(negates_cell));
            let kind = if kind_cell.is_empty() {
                if negates.is_some() {
                    EventKind::DerivedNegation
                } else {
                    EventKind::Asserted
                }
            } else {
                kind_cell
                    .parse()
                    .map_err(|e: crate::model::ModelError| cell_err(line, 9, e.to_string()))?
            };
            Some(Event {
                id: EventId::from(fields[2]),
                text: fields[3].to_string(),
                source_utterance: nb,
                kind,
                negates,
            })
        }
        _ => return Err(cell_err(line, 3, "event id and event text must both be set or both be empty")),
    };
    Ok(AnnotationRow {
        utterance_nb: nb,
        utterance,
        event,
        bel_a: parse_pairs(fields[4], line, 5)?,
        bel_b: parse_pairs(fields[5], line, 6)?,
        cg_a: parse_pairs(fields[6], line, 7)?,
        cg_b: parse_pairs(fields[7], line, 8)?,
    })
}

/// Parses an annotation grid into a dialogue state.
pub fn parse_annotation_tsv(id: &str, text: &str) -> Result<DialogueState, CorpusError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(DialogueState::new(id));
    };
    let header: Vec<&str> = header.split('\t').collect();
    let full = if header == TSV_COLUMNS {
        true
    } else if header == TSV_COLUMNS[..8] {
        false
    } else {
        return Err(line_err(1, format!("header must be {:?}", TSV_COLUMNS.join("\\t"))));
    };

    let mut state = DialogueState::new(id);
    for (n, raw) in lines {
        let line = n + 1;
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != header.len() {
            return Err(line_err(line, format!("expected {} columns, got {}", header.len(), fields.len())));
        }
        let row = parse_row(&fields, line, full)?;
        let current = state.last_index();
        if row.utterance_nb == current + 1 {
            let Some((sp, text)) = row.utterance.clone() else {
                return Err(cell_err(line, 2, format!("utterance {} has no text", row.utterance_nb)));
            };
            state.add_utterance(sp, text).map_err(|e| cell_err(line, 2, e.to_string()))?;
        } else if row.utterance_nb == current && current > 0 {
            if row.utterance.is_some() {
                return Err(cell_err(line, 2, "continuation rows must leave the utterance empty"));
            }
        } else {
            return Err(cell_err(
                line,
                1,
                format!("non-monotone rows: utterance {} after {current}", row.utterance_nb),
            ));
        }
        apply_row(&mut state, row, line)?;
    }
    Ok(state)
}

fn apply_row(state: &mut DialogueState, row: AnnotationRow, line: usize) -> Result<(), CorpusError> {
    let nb = row.utterance_nb;
    if let Some(event) = row.event {
        state.add_event(event).map_err(|e| cell_err(line, 3, e.to_string()))?;
    }
    let engine = |column: usize| move |e: EngineError| cell_err(line, column, e.to_string());
    for (column, speaker, pairs) in [(5, Speaker::A, &row.bel_a), (6, Speaker::B, &row.bel_b)] {
        for (token, event) in pairs {
            let (label, back_dated) = match token.strip_suffix('!') {
                Some(l) => (l, true),
                None => (token.as_str(), false),
            };
            let label: BeliefLabel = label
                .parse()
                .map_err(|_| cell_err(line, column, format!("unknown label {token:?}")))?;
            let source = state
                .event(event)
                .ok_or_else(|| cell_err(line, column, format!("dangling event reference {event}")))?
                .source_utterance;
            let effective_from = if back_dated { source } else { nb };
            state
                .record_belief(BeliefRecord {
                    event: event.clone(),
                    speaker,
                    label,
                    effective_from,
                    evidence_at: nb,
                })
                .map_err(engine(column))?;
        }
    }
    for (column, speaker, pairs) in [(7, Speaker::A, &row.cg_a), (8, Speaker::B, &row.cg_b)] {
        for (token, event) in pairs {
            let label: CgLabel = token
                .parse()
                .map_err(|_| cell_err(line, column, format!("unknown label {token:?}")))?;
            if state.event(event).is_none() {
                return Err(cell_err(line, column, format!("dangling event reference {event}")));
            }
            state
                .record_cg(CgRecord {
                    event: event.clone(),
                    speaker,
                    label,
                    at: nb,
                })
                .map_err(engine(column))?;
        }
    }
    Ok(())
}

fn check_cell_text(text: &str, what: &str) -> Result<(), CorpusError> {
    if text.contains(['\t', '\n', '\r']) {
        return Err(CorpusError::Serialize(format!("{what} contains a tab or newline: {text:?}")));
    }
    Ok(())
}

/// Writes the annotation grid. Records land on the row of their event when
/// it belongs to the same utterance, otherwise on the utterance's first row.
pub fn write_annotation_tsv(state: &DialogueState) -> Result<String, CorpusError> {
    struct Row<'a> {
        nb: UtteranceIndex,
        utterance: Option<&'a Utterance>,
        event: Option<&'a Event>,
        cells: [Vec<String>; 4],
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut first_row: BTreeMap<UtteranceIndex, usize> = BTreeMap::new();
    let mut event_row: BTreeMap<&EventId, usize> = BTreeMap::new();
    for u in state.utterances() {
        check_cell_text(&u.text, "utterance")?;
        first_row.insert(u.index, rows.len());
        let events: Vec<&Event> = state
            .events()
            .iter()
            .filter(|e| e.source_utterance == u.index)
            .collect();
        if events.is_empty() {
            rows.push(Row {
                nb: u.index,
                utterance: Some(u),
                event: None,
                cells: Default::default(),
            });
        }
        for (k, e) in events.into_iter().enumerate() {
            check_cell_text(&e.text, "event")?;
            event_row.insert(&e.id, rows.len());
            rows.push(Row {
                nb: u.index,
                utterance: (k == 0).then_some(u),
                event: Some(e),
                cells: Default::default(),
            });
        }
    }

    for record in state.records() {
        let event = state.event(record.event()).expect("records reference registered events");
        let (time, column, token) = match record {
            Record::Belief(b) => {
                let suffix = if b.effective_from == b.evidence_at {
                    ""
                } else if b.effective_from == event.source_utterance {
                    "!"
                } else {
                    return Err(CorpusError::Serialize(format!(
                        "belief on {} effective from {} with evidence at {} cannot be expressed in the grid",
                        b.event, b.effective_from, b.evidence_at
                    )));
                };
                let col = if b.speaker == Speaker::A { 0 } else { 1 };
                (b.evidence_at, col, format!("{}{suffix} {}", b.label, b.event))
            }
            Record::Cg(c) => {
                let col = if c.speaker == Speaker::A { 2 } else { 3 };
                (c.at, col, format!("{} {}", c.label, c.event))
            }
        };
        let row = if event.source_utterance == time {
            event_row[&event.id]
        } else {
            first_row[&time]
        };
        rows[row].cells[column].push(token);
    }

    let mut out = TSV_COLUMNS.join("\t");
    out.push('\n');
    for row in rows {
        let utterance = row
            .utterance
            .map(|u| format!("{}: {}", u.speaker, u.text))
            .unwrap_or_default();
        let (id, text, kind, negates) = match row.event {
            Some(e) => (
                e.id.to_string(),
                e.text.clone(),
                e.kind.to_string(),
                e.negates.as_ref().map(ToString::to_string).unwrap_or_default(),
            ),
            None => Default::default(),
        };
        let cells: Vec<String> = row.cells.iter().map(|c| c.join(" ")).collect();
        writeln!(
            out,
            "{}\t{utterance}\t{id}\t{text}\t{}\t{kind}\t{negates}",
            row.nb,
            cells.join("\t")
        )
        .unwrap();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// canonical JSON

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<R> {
    format: String,
    id: String,
    utterances: Vec<Utterance>,
    events: Vec<Event>,
    records: Vec<R>,
}

/// Canonical document: sorted keys, two-space indent, LF, trailing newline.
pub fn to_json(state: &DialogueState) -> Vec<u8> {
    let doc = Document::<Record> {
        format: DOCUMENT_FORMAT.to_string(),
        id: state.id().to_string(),
        utterances: state.utterances().to_vec(),
        events: state.events().to_vec(),
        records: state.records().to_vec(),
    };
    // serde_json::Value keeps object keys sorted.
    let value = serde_json::to_value(&doc).expect("document is serializable");
    let mut bytes = serde_json::to_vec_pretty(&value).expect("value is serializable");
    bytes.push(b'\n');
    bytes
}

/// JSON pointer (RFC 6901) for a deserialization path.
pub fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => write!(out, "{index}").unwrap(),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

// Records are decoded by hand so that errors inside a record keep their
// field path (tagged enums buffer their content and lose it).
fn record_from_value(mut value: serde_json::Value, pointer: &str) -> Result<Record, CorpusError> {
    let err = |p: String, message: String| CorpusError::Json { pointer: p, message };
    let tag = value
        .as_object_mut()
        .ok_or_else(|| err(pointer.to_string(), "expected an object".into()))?
        .remove("type");
    fn decode<T: serde::de::DeserializeOwned>(v: serde_json::Value, pointer: &str) -> Result<T, CorpusError> {
        serde_path_to_error::deserialize(v).map_err(|e| CorpusError::Json {
            pointer: format!("{pointer}{}", json_pointer(e.path())),
            message: e.inner().to_string(),
        })
    }
    match tag.as_ref().and_then(|t| t.as_str()) {
        Some("belief") => decode(value, pointer).map(Record::Belief),
        Some("cg") => decode(value, pointer).map(Record::Cg),
        Some(other) => Err(err(format!("{pointer}/type"), format!("unknown record type {other:?}"))),
        None => Err(err(format!("{pointer}/type"), "missing record type".into())),
    }
}

pub fn from_json(bytes: &[u8]) -> Result<DialogueState, CorpusError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let doc: Document<serde_json::Value> = serde_path_to_error::deserialize(&mut de).map_err(|e| CorpusError::Json {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CorpusError::Json {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    let json_err = |pointer: String, message: String| CorpusError::Json { pointer, message };
    if doc.format != DOCUMENT_FORMAT {
        return Err(json_err(
            "/format".into(),
            format!("unsupported format {:?}, expected {DOCUMENT_FORMAT:?}", doc.format),
        ));
    }
    let mut state = DialogueState::new(doc.id);
    for (i, u) in doc.utterances.into_iter().enumerate() {
        if u.index as usize != i + 1 {
            return Err(json_err(
                format!("/utterances/{i}/index"),
                format!("expected index {}, got {}", i + 1, u.index),
            ));
        }
        state
            .add_utterance(u.speaker, u.text)
            .map_err(|e| json_err(format!("/utterances/{i}/text"), e.to_string()))?;
    }
    for (i, e) in doc.events.into_iter().enumerate() {
        state
            .add_event(e)
            .map_err(|e| json_err(format!("/events/{i}"), e.to_string()))?;
    }
    for (i, r) in doc.records.into_iter().enumerate() {
        let r = record_from_value(r, &format!("/records/{i}"))?;
        let res = match r {
            Record::Belief(b) => state.record_belief(b),
            Record::Cg(c) => state.record_cg(c),
        };
        res.map_err(|e| json_err(format!("/records/{i}"), e.to_string()))?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// predictions

pub const PREDICTION_HEADER: &str = "event_id\ttask\tlabel_a\tlabel_b";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictedLabels {
    Cg(CgLabel, CgLabel),
    Belief(BeliefLabel, BeliefLabel),
}

impl PredictedLabels {
    fn task(&self) -> &'static str {
        match self {
            PredictedLabels::Cg(..) => "cg",
            PredictedLabels::Belief(..) => "bel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub event: EventId,
    pub labels: PredictedLabels,
}

/// Predicted labels per event, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Predictions {
    rows: Vec<PredictionRow>,
}

impl Predictions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: EventId, labels: PredictedLabels) -> Result<(), String> {
        if self
            .rows
            .iter()
            .any(|r| r.event == event && r.labels.task() == labels.task())
        {
            return Err(format!("duplicate {} prediction for {event}", labels.task()));
        }
        self.rows.push(PredictionRow { event, labels });
        Ok(())
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cg(&self) -> BTreeMap<EventId, (CgLabel, CgLabel)> {
        self.rows
            .iter()
            .filter_map(|r| match r.labels {
                PredictedLabels::Cg(a, b) => Some((r.event.clone(), (a, b))),
                PredictedLabels::Belief(..) => None,
            })
            .collect()
    }

    pub fn beliefs(&self) -> BTreeMap<EventId, (BeliefLabel, BeliefLabel)> {
        self.rows
            .iter()
            .filter_map(|r| match r.labels {
                PredictedLabels::Belief(a, b) => Some((r.event.clone(), (a, b))),
                PredictedLabels::Cg(..) => None,
            })
            .collect()
    }

    /// Fails on the first event that `state` does not know.
    pub fn check_events(&self, state: &DialogueState) -> Result<(), CorpusError> {
        match self.rows.iter().find(|r| state.event(&r.event).is_none()) {
            Some(r) => Err(CorpusError::Serialize(format!(
                "prediction for unknown event {} in dialogue {}",
                r.event,
                state.id()
            ))),
            None => Ok(()),
        }
    }
}

pub fn parse_predictions(text: &str) -> Result<Predictions, CorpusError> {
    let mut out = Predictions::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        None => return Ok(out),
        Some((n, h)) if h != PREDICTION_HEADER => {
            return Err(line_err(n + 1, format!("header must be {PREDICTION_HEADER:?}")))
        }
        Some(_) => {}
    }
    for (n, raw) in lines {
        let line = n + 1;
        let fields: Vec<&str> = raw.split('\t').collect();
        let [event, task, a, b] = fields[..] else {
            return Err(line_err(line, format!("expected 4 columns, got {}", fields.len())));
        };
        if event.is_empty() {
            return Err(cell_err(line, 1, "empty event id"));
        }
        let bad = |column: usize, tok: &str| cell_err(line, column, format!("unknown label {tok:?}"));
        let labels = match task {
            "cg" => PredictedLabels::Cg(
                a.parse().map_err(|_| bad(3, a))?,
                b.parse().map_err(|_| bad(4, b))?,
            ),
            "bel" => PredictedLabels::Belief(
                a.parse().map_err(|_| bad(3, a))?,
                b.parse().map_err(|_| bad(4, b))?,
            ),
            other => return Err(cell_err(line, 2, format!("unknown task {other:?} (expected cg|bel)"))),
        };
        out.push(EventId::from(event), labels)
            .map_err(|m| line_err(line, m))?;
    }
    Ok(out)
}

pub fn write_predictions(predictions: &Predictions) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for row in predictions.rows() {
        let (a, b) = match row.labels {
            PredictedLabels::Cg(a, b) => (a.kind().to_string(), b.kind().to_string()),
            PredictedLabels::Belief(a, b) => (a.to_string(), b.to_string()),
        };
        writeln!(out, "{}\t{}\t{a}\t{b}", row.event, row.labels.task()).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// event lists

/// Parses an `.events` file. Lines are either `text` or `group<TAB>text`;
/// ungrouped lines all belong to group `""`.
pub fn parse_event_list(text: &str) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (group, event) = match line.split_once('\t') {
            Some((g, e)) => (g.trim().to_string(), e.trim()),
            None => (String::new(), line.trim()),
        };
        out.entry(group).or_default().push(event.to_string());
    }
    out
}

/// Event texts of a dialogue grouped by source utterance.
pub fn event_groups(state: &DialogueState) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in state.events_in_dialogue_order() {
        out.entry(format!("{:06}", e.source_utterance))
            .or_default()
            .push(e.text.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CgKind;

    pub(crate) const REILLY_TSV: &str = include_str!("../tests/fixtures/reilly.cga.tsv");

    #[test]
    fn transcript_examples() {
        let u = parse_transcript("A: hi\nB: hello").unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u[1].speaker, Speaker::B);
        assert_eq!(u[1].index, 2);
        let err = parse_transcript("C: hi").unwrap_err();
        assert!(err.to_string().contains("unknown speaker at line 1"), "{err}");
        let ex = parse_transcript("A: I thought I was going to get to see everybody.").unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].speaker, Speaker::A);
        assert!(parse_transcript("A:").is_err());
        assert!(parse_transcript("\nA: x\n\nB:  \n").is_err());
        assert!(matches!(parse_transcript("hello"), Err(CorpusError::Line { line: 1, .. })));
    }

    #[test]
    fn reilly_grid() {
        let s = parse_annotation_tsv("reilly", REILLY_TSV).unwrap();
        for sp in Speaker::BOTH {
            let kinds: Vec<_> = s.cg_state(sp, 2).into_iter().map(|(k, v)| (k.to_string(), v.kind())).collect();
            assert_eq!(
                kinds,
                vec![("e1".into(), CgKind::Ja), ("e2".into(), CgKind::Rt), ("e3".into(), CgKind::Ja)]
            );
        }
        assert_eq!(s.validate(), vec![]);
        let b = s
            .records()
            .iter()
            .find_map(|r| match r {
                Record::Belief(b) if b.event.as_str() == "e2" && b.speaker == Speaker::B => Some(b.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!((b.effective_from, b.evidence_at), (1, 2));
        assert_eq!(s.event(&"e3".into()).unwrap().negates, Some("e2".into()));
        assert_eq!(write_annotation_tsv(&s).unwrap(), REILLY_TSV);
    }

    #[test]
    fn grid_errors() {
        let header = TSV_COLUMNS.join("\t");
        let with = |row: &str| format!("{header}\n{row}\n");
        let err = parse_annotation_tsv("x", &with("1\tA: hi\te1\tx\tCT? e1\t\t\t\t\t")).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
        assert!(matches!(err, CorpusError::Cell { line: 2, column: 5, .. }));
        let err = parse_annotation_tsv("x", &with("1\tA: hi\te1\tx\tCT+ e7\t\t\t\t\t")).unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");
        let err = parse_annotation_tsv("x", &with("2\tA: hi\t\t\t\t\t\t\t\t")).unwrap_err();
        assert!(err.to_string().contains("non-monotone"), "{err}");
        let err = parse_annotation_tsv("x", "Nb\tUtterance\n1\tA: hi\n").unwrap_err();
        assert!(matches!(err, CorpusError::Line { line: 1, .. }));
        let err = parse_annotation_tsv("x", &with("1\tA: hi\te1\tx\tCT+\t\t\t\t\t")).unwrap_err();
        assert!(matches!(err, CorpusError::Cell { column: 5, .. }));
        let err = parse_annotation_tsv("x", &with("1\tA: hi\te1\tx\t\t\tJA! e1\t\t\t")).unwrap_err();
        assert!(err.to_string().contains("unknown label"));
        assert_eq!(parse_annotation_tsv("x", "").unwrap(), DialogueState::new("x"));
    }

    #[test]
    fn backdated_cell_on_second_row() {
        let header = TSV_COLUMNS.join("\t");
        let text = format!(
            "{header}\n1\tA: So?\te2\tB has been leading the life of Reilly\tPS e2\t\t\t\tasserted\t\n2\tB: No.\t\t\t\tCT-! e2\t\t\t\t\n"
        );
        let s = parse_annotation_tsv("x", &text).unwrap();
        assert_eq!(
            s.records()[1],
            Record::Belief(BeliefRecord::new("e2", Speaker::B, BeliefLabel::CtMinus, 1, 2))
        );
        assert_eq!(write_annotation_tsv(&s).unwrap(), text);
    }

    #[test]
    fn grid_rejects_inexpressible_backdating() {
        let mut s = DialogueState::new("x");
        for t in ["a", "b", "c"] {
            s.add_utterance(Speaker::A, t).unwrap();
        }
        s.add_event(Event::asserted("e1", "x", 1)).unwrap();
        s.record_belief(BeliefRecord::new("e1", Speaker::A, BeliefLabel::Ps, 2, 3)).unwrap();
        assert!(matches!(write_annotation_tsv(&s), Err(CorpusError::Serialize(_))));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let s = parse_annotation_tsv("reilly", REILLY_TSV).unwrap();
        let bytes = to_json(&s);
        assert_eq!(from_json(&bytes).unwrap(), s);
        assert_eq!(to_json(&from_json(&bytes).unwrap()), bytes);
        assert!(bytes.ends_with(b"}\n"));

        let truncated = &bytes[..bytes.len() / 2];
        let err = from_json(truncated).unwrap_err();
        let CorpusError::Json { pointer, .. } = &err else { panic!("{err}") };
        assert!(pointer.starts_with('/'), "{err}");

        let text = String::from_utf8(bytes.clone()).unwrap();
        let bad_label = text.replacen("\"label\": \"CT+\"", "\"label\": \"CT?\"", 1);
        let err = from_json(bad_label.as_bytes()).unwrap_err();
        assert!(matches!(&err, CorpusError::Json { pointer, .. } if pointer == "/records/0/label"), "{err}");

        let bad_ref = text.replacen("\"event\": \"e1\"", "\"event\": \"e9\"", 1);
        let err = from_json(bad_ref.as_bytes()).unwrap_err();
        assert!(matches!(&err, CorpusError::Json { pointer, .. } if pointer == "/records/0"), "{err}");

        let extra = text.replacen("\"format\"", "\"bogus\": 1, \"format\"", 1);
        assert!(from_json(extra.as_bytes()).is_err());
    }

    #[test]
    fn prediction_examples() {
        let p = parse_predictions(&format!("{PREDICTION_HEADER}\ne2\tcg\tRT\tRT\n")).unwrap();
        assert_eq!(p.cg()[&EventId::from("e2")], (CgLabel::Rt, CgLabel::Rt));
        let err = parse_predictions(&format!("{PREDICTION_HEADER}\ne2\tcg\tXX\tRT\n")).unwrap_err();
        assert!(matches!(err, CorpusError::Cell { line: 2, column: 3, .. }));
        assert!(parse_predictions("").unwrap().is_empty());
        assert!(parse_predictions(&format!("{PREDICTION_HEADER}\n")).unwrap().is_empty());
        assert!(parse_predictions(&format!("{PREDICTION_HEADER}\ne2\tfoo\tRT\tRT\n")).is_err());
        assert!(parse_predictions(&format!("{PREDICTION_HEADER}\ne2\tcg\tRT\tRT\ne2\tcg\tJA\tJA\n")).is_err());
        assert!(parse_predictions("e2\tcg\tRT\tRT\n").is_err());

        let text = format!("{PREDICTION_HEADER}\ne1\tcg\tJA\tJA\ne2\tbel\tCT-\t0\n");
        let p = parse_predictions(&text).unwrap();
        assert_eq!(write_predictions(&p), text);
        assert_eq!(p.beliefs()[&EventId::from("e2")], (BeliefLabel::CtMinus, BeliefLabel::Null));

        let s = parse_annotation_tsv("reilly", REILLY_TSV).unwrap();
        assert!(p.check_events(&s).is_ok());
        let unknown = parse_predictions(&format!("{PREDICTION_HEADER}\ne9\tcg\tRT\tRT\n")).unwrap();
        assert!(unknown.check_events(&s).is_err());
    }

    #[test]
    fn event_lists() {
        let g = parse_event_list("A got to see everybody\n\nB sleeps\n");
        assert_eq!(g[""], vec!["A got to see everybody", "B sleeps"]);
        let g = parse_event_list("1\tA thought so\n2\tB sleeps\n1\tA went\n");
        assert_eq!(g["1"].len(), 2);
        assert_eq!(g["2"], vec!["B sleeps"]);
    }

    mod props {
        use super::*;
        use crate::synth::random_dialogue;
        use proptest::prelude::*;
        use rand::rngs::StdRng;
        use rand::SeedableRng;

        fn finals(s: &DialogueState) -> Vec<(EventId, Speaker, BeliefLabel, CgLabel)> {
            let mut out = Vec::new();
            for e in s.events() {
                for sp in Speaker::BOTH {
                    out.push((
                        e.id.clone(),
                        sp,
                        s.final_belief(&e.id, sp).unwrap(),
                        s.final_cg(&e.id, sp).unwrap(),
                    ));
                }
            }
            out.sort();
            out
        }

        proptest! {
            #[test]
            fn json_round_trips(seed in any::<u64>(), n in 0usize..150) {
                let s = random_dialogue(&mut StdRng::seed_from_u64(seed), "p", n);
                let bytes = to_json(&s);
                let back = from_json(&bytes).unwrap();
                prop_assert_eq!(&back, &s);
                prop_assert_eq!(to_json(&back), bytes);
            }

            #[test]
            fn grid_round_trips(seed in any::<u64>(), n in 0usize..150) {
                let s = random_dialogue(&mut StdRng::seed_from_u64(seed), "p", n);
                let text = write_annotation_tsv(&s).unwrap();
                let back = parse_annotation_tsv("p", &text).unwrap();
                prop_assert_eq!(write_annotation_tsv(&back).unwrap(), text);
                prop_assert_eq!(back.utterances(), s.utterances());
                prop_assert_eq!(back.events_in_dialogue_order(), s.events_in_dialogue_order());
                prop_assert_eq!(back.records().len(), s.records().len());
                prop_assert_eq!(finals(&back), finals(&s));
                for t in 0..=s.last_index() {
                    for sp in Speaker::BOTH {
                        prop_assert_eq!(back.cg_state(sp, t), s.cg_state(sp, t));
                        for e in s.events() {
                            prop_assert_eq!(back.belief_at(&e.id, sp, t), s.belief_at(&e.id, sp, t));
                        }
                    }
                }
            }

            #[test]
            fn transcript_round_trips(seed in any::<u64>(), n in 0usize..60) {
                let s = random_dialogue(&mut StdRng::seed_from_u64(seed), "p", n);
                let text = write_transcript(s.utterances());
                prop_assert_eq!(parse_transcript(&text).unwrap(), s.utterances().to_vec());
            }
        }
    }
}
