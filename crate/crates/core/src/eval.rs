//! Classification scoring and corpus statistics.
//!
//! Conventions: F1 is reported as a percentage, undefined precision or
//! recall yields F1 = 0, macro F1 averages only the designated classes (the
//! unannotated "0" class is left out), and accuracy counts every item.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::DialogueState;
use crate::model::{BeliefLabel, CgKind, Speaker};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("length mismatch: {gold} gold labels vs {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("macro class set is empty")]
    NoMacroClasses,
    #[error("class sets differ: {0:?} vs {1:?}")]
    ClassMismatch(Vec<String>, Vec<String>),
}

pub const BELIEF_MACRO_CLASSES: [&str; 4] = ["CT+", "CT-", "PS", "NB"];
pub const CG_MACRO_CLASSES: [&str; 3] = ["JA", "IN", "RT"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_f1: BTreeMap<String, f64>,
    pub macro_classes: Vec<String>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub support: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Gold label whose items are left out of the accuracy denominator.
    pub accuracy_skip: Option<String>,
}

pub fn macro_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn score<S: AsRef<str>>(
    gold: &[S],
    pred: &[S],
    macro_classes: &[&str],
) -> Result<EvalReport, EvalError> {
    score_with(gold, pred, macro_classes, &ScoreOptions::default())
}

pub fn score_with<S: AsRef<str>>(
    gold: &[S],
    pred: &[S],
    macro_classes: &[&str],
    options: &ScoreOptions,
) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if macro_classes.is_empty() {
        return Err(EvalError::NoMacroClasses);
    }
    let classes: BTreeSet<&str> = gold
        .iter()
        .chain(pred)
        .map(AsRef::as_ref)
        .chain(macro_classes.iter().copied())
        .collect();

    let mut per_class_f1 = BTreeMap::new();
    let mut support = BTreeMap::new();
    for class in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.as_ref() == *class, p.as_ref() == *class);
            match (g, p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fn_) as f64;
            2.0 * precision * recall / (precision + recall)
        };
        per_class_f1.insert(class.to_string(), 100.0 * f1);
        support.insert(class.to_string(), (tp + fn_) as f64);
    }
    let macro_values: Vec<f64> = macro_classes.iter().map(|c| per_class_f1[*c]).collect();

    let counted: Vec<(&str, &str)> = gold
        .iter()
        .zip(pred)
        .map(|(g, p)| (g.as_ref(), p.as_ref()))
        .filter(|(g, _)| options.accuracy_skip.as_deref() != Some(*g))
        .collect();
    let accuracy = if counted.is_empty() {
        0.0
    } else {
        100.0 * counted.iter().filter(|(g, p)| g == p).count() as f64 / counted.len() as f64
    };

    Ok(EvalReport {
        per_class_f1,
        macro_classes: macro_classes.iter().map(|c| c.to_string()).collect(),
        macro_f1: macro_average(&macro_values),
        accuracy,
        support,
    })
}

/// Field-wise mean of two reports over the same classes.
pub fn speaker_avg(a: &EvalReport, b: &EvalReport) -> Result<EvalReport, EvalError> {
    let keys = |r: &EvalReport| r.per_class_f1.keys().cloned().collect::<Vec<_>>();
    if keys(a) != keys(b) || a.macro_classes != b.macro_classes {
        return Err(EvalError::ClassMismatch(keys(a), keys(b)));
    }
    let mean_map = |x: &BTreeMap<String, f64>, y: &BTreeMap<String, f64>| {
        x.iter()
            .map(|(k, v)| (k.clone(), (v + y[k]) / 2.0))
            .collect::<BTreeMap<_, _>>()
    };
    Ok(EvalReport {
        per_class_f1: mean_map(&a.per_class_f1, &b.per_class_f1),
        macro_classes: a.macro_classes.clone(),
        macro_f1: (a.macro_f1 + b.macro_f1) / 2.0,
        accuracy: (a.accuracy + b.accuracy) / 2.0,
        support: mean_map(&a.support, &b.support),
    })
}

impl EvalReport {
    /// Aligned text table: the macro classes' F1, then the other classes,
    /// then macro F1 and accuracy.
    pub fn to_table(&self) -> String {
        let mut columns: Vec<(String, f64)> = self
            .macro_classes
            .iter()
            .map(|c| (format!("{c} F1"), self.per_class_f1[c]))
            .collect();
        for (c, v) in &self.per_class_f1 {
            if !self.macro_classes.contains(c) {
                columns.push((format!("{c} F1"), *v));
            }
        }
        columns.push(("Macro F1".into(), self.macro_f1));
        columns.push(("Accuracy".into(), self.accuracy));
        let widths: Vec<usize> = columns.iter().map(|(h, _)| h.len().max(6)).collect();
        let mut out = String::new();
        let header: Vec<String> = columns
            .iter()
            .zip(&widths)
            .map(|((h, _), w)| format!("{h:>w$}"))
            .collect();
        let values: Vec<String> = columns
            .iter()
            .zip(&widths)
            .map(|((_, v), w)| format!("{v:>w$.2}"))
            .collect();
        writeln!(out, "{}", header.join("  ")).unwrap();
        writeln!(out, "{}", values.join("  ")).unwrap();
        out
    }
}

/// Table-3-style annotation counts. Belief and CG counts add up both
/// speakers' final labels per event; "0" counts unannotated cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub utterances: usize,
    pub events: usize,
    pub beliefs: BTreeMap<String, usize>,
    pub cg: BTreeMap<String, usize>,
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution {
            utterances: 0,
            events: 0,
            beliefs: BeliefLabel::ALL.iter().map(|l| (l.token().to_string(), 0)).collect(),
            cg: CgKind::ALL.iter().map(|k| (k.token().to_string(), 0)).collect(),
        }
    }
}

pub fn distribution<'a, I>(states: I) -> Distribution
where
    I: IntoIterator<Item = &'a DialogueState>,
{
    let mut d = Distribution::default();
    for state in states {
        d.utterances += state.utterances().len();
        d.events += state.events().len();
        for e in state.events() {
            for sp in Speaker::BOTH {
                let bel = state.final_belief(&e.id, sp).expect("registered event");
                *d.beliefs.entry(bel.token().to_string()).or_default() += 1;
                let cg = state.final_cg(&e.id, sp).expect("registered event");
                *d.cg.entry(cg.kind().token().to_string()).or_default() += 1;
            }
        }
    }
    d
}

impl Distribution {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<18}{:>8}", "Utterance", self.utterances).unwrap();
        writeln!(out, "{:<18}{:>8}", "Event", self.events).unwrap();
        for l in BeliefLabel::ALL {
            writeln!(out, "{:<14}{:<4}{:>8}", "Bel(A)+Bel(B)", l.token(), self.beliefs[l.token()]).unwrap();
        }
        for k in CgKind::ALL {
            writeln!(out, "{:<14}{:<4}{:>8}", "CG(A)+CG(B)", k.token(), self.cg[k.token()]).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::tests::reilly;
    use crate::model::{BeliefRecord, Event};

    fn report_from(f1: &[(&str, f64)], macro_classes: &[&str]) -> EvalReport {
        EvalReport {
            per_class_f1: f1.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            macro_classes: macro_classes.iter().map(|c| c.to_string()).collect(),
            macro_f1: macro_average(&f1.iter().map(|x| x.1).collect::<Vec<_>>()),
            accuracy: 0.0,
            support: f1.iter().map(|(k, _)| (k.to_string(), 0.0)).collect(),
        }
    }

    #[test]
    fn macro_arithmetic_matches_printed_rows() {
        let belief = macro_average(&[89.67, 14.83, 32.33, 12.67]);
        assert!((belief - 37.38).abs() <= 0.005 + 1e-9, "{belief}");
        let cg = macro_average(&[94.50, 0.00, 99.50]);
        assert!((cg - 64.67).abs() <= 0.005, "{cg}");
    }

    #[test]
    fn perfect_prediction() {
        let gold = ["CT+", "CT-", "PS", "CT+", "0"];
        let r = score(&gold, &gold, &BELIEF_MACRO_CLASSES).unwrap();
        assert_eq!(r.accuracy, 100.0);
        for c in ["CT+", "CT-", "PS", "0"] {
            assert_eq!(r.per_class_f1[c], 100.0);
        }
        // NB absent from both sides: undefined → 0
        assert_eq!(r.per_class_f1["NB"], 0.0);
        assert_eq!(r.macro_f1, 75.0);
    }

    #[test]
    fn hand_computed_scores() {
        // JA: tp=2 fp=1 fn=0 → P 2/3 R 1 → F1 0.8; RT: tp=1 fp=0 fn=1 → 2/3
        let gold = ["JA", "JA", "RT", "RT", "0"];
        let pred = ["JA", "JA", "RT", "JA", "0"];
        let r = score(&gold, &pred, &CG_MACRO_CLASSES).unwrap();
        assert!((r.per_class_f1["JA"] - 80.0).abs() < 1e-9);
        assert!((r.per_class_f1["RT"] - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.per_class_f1["IN"], 0.0);
        assert!((r.macro_f1 - (80.0 + 200.0 / 3.0) / 3.0).abs() < 1e-9);
        assert_eq!(r.accuracy, 80.0);
        let skip = score_with(&gold, &pred, &CG_MACRO_CLASSES, &ScoreOptions { accuracy_skip: Some("0".into()) }).unwrap();
        assert_eq!(skip.accuracy, 75.0);
        assert_eq!(
            score(&gold, &pred[..2], &CG_MACRO_CLASSES),
            Err(EvalError::LengthMismatch { gold: 5, pred: 2 })
        );
        assert_eq!(score(&gold, &pred, &[]), Err(EvalError::NoMacroClasses));
    }

    #[test]
    fn speaker_average() {
        let mut a = report_from(&[("JA", 90.0), ("IN", 10.0), ("RT", 20.0)], &CG_MACRO_CLASSES);
        let mut b = report_from(&[("JA", 80.0), ("IN", 30.0), ("RT", 22.0)], &CG_MACRO_CLASSES);
        a.accuracy = 80.0;
        b.accuracy = 70.0;
        a.macro_f1 = 40.0;
        b.macro_f1 = 44.0;
        let avg = speaker_avg(&a, &b).unwrap();
        assert_eq!(avg.accuracy, 75.0);
        assert_eq!(avg.macro_f1, 42.0);
        assert_eq!(avg.per_class_f1["JA"], 85.0);
        assert_eq!(speaker_avg(&a, &a).unwrap(), a);
        let c = report_from(&[("JA", 90.0)], &["JA"]);
        assert!(matches!(speaker_avg(&a, &c), Err(EvalError::ClassMismatch(..))));
    }

    #[test]
    fn reilly_distribution() {
        let d = distribution([&reilly()]);
        assert_eq!(d.utterances, 2);
        assert_eq!(d.events, 3);
        let nonzero = |m: &BTreeMap<String, usize>| {
            m.iter().filter(|(_, v)| **v > 0).map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>()
        };
        assert_eq!(nonzero(&d.beliefs), vec![("CT+".into(), 4), ("CT-".into(), 2)]);
        assert_eq!(nonzero(&d.cg), vec![("JA".into(), 4), ("RT".into(), 2)]);
    }

    #[test]
    fn empty_and_null_distribution() {
        let d = distribution(std::iter::empty());
        assert_eq!(d, Distribution::default());
        assert!(d.beliefs.values().chain(d.cg.values()).all(|v| *v == 0));

        let mut s = DialogueState::new("n");
        s.add_utterance(Speaker::A, "hm").unwrap();
        s.add_event(Event::asserted("e1", "x", 1)).unwrap();
        s.record_belief(BeliefRecord::new("e1", Speaker::A, BeliefLabel::Nb, 1, 1)).unwrap();
        let d = distribution([&s]);
        assert_eq!(d.beliefs["0"], 1);
        assert_eq!(d.beliefs["NB"], 1);
        assert_eq!(d.cg["0"], 2);
    }
}
