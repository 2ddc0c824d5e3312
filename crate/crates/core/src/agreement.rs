//! Inter-annotator agreement.
//!
//! EMBERT scores two event lists by the optimal one-to-one matching between
//! them: the matched similarities are summed and divided by the size of the
//! larger list, so every unmatched event on either side contributes zero.
//! Label tasks use Cohen's kappa (pairwise) and Fleiss' kappa (all raters).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::engine::DialogueState;
use crate::model::Speaker;
use crate::similarity::{SimilarityError, SimilarityProvider};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgreementError {
    #[error("ragged score matrix: row {row} has {len} columns, expected {expected}")]
    RaggedMatrix { row: usize, len: usize, expected: usize },
    #[error("cohen's kappa needs exactly 2 raters, got {0}")]
    RaterCount(usize),
    #[error("label table has no items")]
    EmptyTable,
    #[error("incomplete table: item {item:?} has no label from rater {rater:?}")]
    IncompleteTable { item: String, rater: String },
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("degenerate marginals: chance agreement is 1 but observed agreement is {observed}")]
    DegenerateMarginals { observed: f64 },
    #[error("task coverage mismatch: {0}")]
    TaskCoverage(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Dense `rows × cols` matrix of similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AgreementError> {
        let cols = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(AgreementError::RaggedMatrix {
                    row: i,
                    len: r.len(),
                    expected: cols,
                });
            }
        }
        Ok(ScoreMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ScoreMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Score with zero padding outside the real matrix.
    fn padded(&self, i: usize, j: usize) -> f64 {
        if i < self.rows && j < self.cols {
            self.get(i, j)
        } else {
            0.0
        }
    }
}

const TIE_EPS: f64 = 1e-9;

/// Optimal solution of a square sub-problem, indexed by original row/col.
struct Assignment {
    value: f64,
    col_of: Vec<usize>,
    row_pot: Vec<f64>,
    col_pot: Vec<f64>,
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on the
/// sub-matrix `rows × cols` of the zero-padded score matrix, maximizing.
fn solve(m: &ScoreMatrix, rows: &[usize], cols: &[usize], k: usize) -> Assignment {
    let n = rows.len();
    debug_assert_eq!(n, cols.len());
    let cost = |r: usize, c: usize| -m.padded(rows[r - 1], cols[c - 1]);

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![usize::MAX; k];
    let mut row_pot = vec![0.0; k];
    let mut col_pot = vec![0.0; k];
    let mut value = 0.0;
    for j in 1..=n {
        let r = rows[p[j] - 1];
        let c = cols[j - 1];
        col_of[r] = c;
        value += m.padded(r, c);
    }
    for (pos, &r) in rows.iter().enumerate() {
        row_pot[r] = u[pos + 1];
    }
    for (pos, &c) in cols.iter().enumerate() {
        col_pot[c] = v[pos + 1];
    }
    Assignment {
        value,
        col_of,
        row_pot,
        col_pot,
    }
}

/// Injective mapping of size `min(rows, cols)` maximizing the total score.
/// Among optimal mappings the lexicographically smallest sorted pair list
/// is returned.
pub fn best_mapping(m: &ScoreMatrix) -> Vec<(usize, usize)> {
    let k = m.rows.max(m.cols);
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    let mut rows: Vec<usize> = (0..k).collect();
    let mut cols: Vec<usize> = (0..k).collect();
    let mut best = solve(m, &rows, &cols, k);
    let mut pairs = Vec::new();

    for i in 0..m.rows {
        let current = best.col_of[i];
        let mut chosen = current;
        // Any mapping using (i, c) is worth at most value - reduced cost, so
        // only tight cells can tie with the current optimum.
        let earlier = cols
            .iter()
            .copied()
            .filter(|&c| c < m.cols && (current >= m.cols || c < current));
        let rest_rows: Vec<usize> = rows.iter().copied().filter(|&r| r != i).collect();
        for c in earlier {
            let reduced = -m.padded(i, c) - best.row_pot[i] - best.col_pot[c];
            if reduced > TIE_EPS {
                continue;
            }
            let rest_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let sub = solve(m, &rest_rows, &rest_cols, k);
            if m.padded(i, c) + sub.value >= best.value - TIE_EPS {
                chosen = c;
                best = Assignment {
                    value: m.padded(i, c) + sub.value,
                    col_of: {
                        let mut col_of = sub.col_of;
                        col_of[i] = c;
                        col_of
                    },
                    row_pot: sub.row_pot,
                    col_pot: sub.col_pot,
                };
                break;
            }
        }
        if chosen < m.cols {
            pairs.push((i, chosen));
        }
        best.value -= m.padded(i, chosen);
        rows = rest_rows;
        cols.retain(|&x| x != chosen);
    }
    pairs
}

/// Reference and compared event lists. Duplicates are distinct items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventSetPair {
    pub reference: Vec<String>,
    pub compared: Vec<String>,
}

impl EventSetPair {
    pub fn new<S: AsRef<str>>(reference: &[S], compared: &[S]) -> Self {
        EventSetPair {
            reference: reference.iter().map(|s| s.as_ref().to_string()).collect(),
            compared: compared.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }
}

/// Event-matched agreement in `[0, 1]`. Two empty lists agree vacuously.
pub fn embert<P>(pair: &EventSetPair, f: &P) -> Result<f64, SimilarityError>
where
    P: SimilarityProvider + ?Sized,
{
    let n = pair.reference.len();
    let m = pair.compared.len();
    if n == 0 && m == 0 {
        return Ok(1.0);
    }
    if n == 0 || m == 0 {
        return Ok(0.0);
    }
    let texts: Vec<&str> = pair
        .reference
        .iter()
        .chain(&pair.compared)
        .map(String::as_str)
        .collect();
    f.prepare(&texts)?;
    let mut data = Vec::with_capacity(n * m);
    for r in &pair.reference {
        for c in &pair.compared {
            data.push(f.similarity(r, c)?);
        }
    }
    let scores = ScoreMatrix { rows: n, cols: m, data };
    let total: f64 = best_mapping(&scores)
        .into_iter()
        .map(|(i, j)| scores.get(i, j))
        .sum();
    Ok(total / n.max(m) as f64)
}

/// EMBERT over aligned groups (e.g. per utterance), averaged with equal
/// weight per group key present on either side.
pub fn embert_grouped<P>(
    reference: &BTreeMap<String, Vec<String>>,
    compared: &BTreeMap<String, Vec<String>>,
    f: &P,
) -> Result<f64, SimilarityError>
where
    P: SimilarityProvider + ?Sized,
{
    let keys: BTreeSet<&String> = reference.keys().chain(compared.keys()).collect();
    if keys.is_empty() {
        return Ok(1.0);
    }
    let empty = Vec::new();
    let mut sum = 0.0;
    for key in &keys {
        let pair = EventSetPair {
            reference: reference.get(*key).unwrap_or(&empty).clone(),
            compared: compared.get(*key).unwrap_or(&empty).clone(),
        };
        sum += embert(&pair, f)?;
    }
    Ok(sum / keys.len() as f64)
}

/// Categorical labels given by a set of raters to a set of items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    raters: Vec<String>,
    items: Vec<String>,
    labels: HashMap<(usize, usize), String>,
}

impl LabelTable {
    pub fn new<S: AsRef<str>>(raters: &[S]) -> Self {
        LabelTable {
            raters: raters.iter().map(|r| r.as_ref().to_string()).collect(),
            ..Default::default()
        }
    }

    /// One label sequence per rater; item `i` is the i-th element of each.
    pub fn from_sequences<S: AsRef<str>>(sequences: &[Vec<S>]) -> Self {
        let raters: Vec<String> = (0..sequences.len()).map(|r| format!("r{r}")).collect();
        let mut table = LabelTable::new(&raters);
        for (r, seq) in sequences.iter().enumerate() {
            for (i, label) in seq.iter().enumerate() {
                table
                    .insert(&i.to_string(), &raters[r], label.as_ref())
                    .expect("rater exists");
            }
        }
        table
    }

    pub fn insert(&mut self, item: &str, rater: &str, label: &str) -> Result<(), AgreementError> {
        let r = self
            .raters
            .iter()
            .position(|x| x == rater)
            .ok_or_else(|| AgreementError::UnknownRater(rater.to_string()))?;
        let i = match self.items.iter().position(|x| x == item) {
            Some(i) => i,
            None => {
                self.items.push(item.to_string());
                self.items.len() - 1
            }
        };
        self.labels.insert((i, r), label.to_string());
        Ok(())
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Rows of labels, one per item, checking completeness.
    fn complete_rows(&self) -> Result<Vec<Vec<&str>>, AgreementError> {
        if self.items.is_empty() {
            return Err(AgreementError::EmptyTable);
        }
        (0..self.items.len())
            .map(|i| {
                (0..self.raters.len())
                    .map(|r| {
                        self.labels.get(&(i, r)).map(String::as_str).ok_or_else(|| {
                            AgreementError::IncompleteTable {
                                item: self.items[i].clone(),
                                rater: self.raters[r].clone(),
                            }
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn chance_corrected(observed: f64, expected: f64) -> Result<f64, AgreementError> {
    if (1.0 - expected).abs() < 1e-12 {
        return if (1.0 - observed).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(AgreementError::DegenerateMarginals { observed })
        };
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Cohen's kappa for exactly two raters.
pub fn cohen_kappa(table: &LabelTable) -> Result<f64, AgreementError> {
    if table.raters.len() != 2 {
        return Err(AgreementError::RaterCount(table.raters.len()));
    }
    let rows = table.complete_rows()?;
    let n = rows.len() as f64;
    let mut first: BTreeMap<&str, f64> = BTreeMap::new();
    let mut second: BTreeMap<&str, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for row in &rows {
        *first.entry(row[0]).or_default() += 1.0;
        *second.entry(row[1]).or_default() += 1.0;
        if row[0] == row[1] {
            agree += 1.0;
        }
    }
    let observed = agree / n;
    let expected: f64 = first
        .iter()
        .map(|(label, c)| (c / n) * (second.get(label).copied().unwrap_or(0.0) / n))
        .sum();
    chance_corrected(observed, expected)
}

/// Fleiss' kappa over a complete table with at least two raters.
pub fn fleiss_kappa(table: &LabelTable) -> Result<f64, AgreementError> {
    let raters = table.raters.len();
    if raters < 2 {
        return Err(AgreementError::RaterCount(raters));
    }
    let rows = table.complete_rows()?;
    let n_items = rows.len() as f64;
    let n = raters as f64;
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    let mut mean_agreement = 0.0;
    for row in &rows {
        let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
        for label in row {
            *counts.entry(label).or_default() += 1.0;
            *totals.entry(label).or_default() += 1.0;
        }
        let squares: f64 = counts.values().map(|c| c * c).sum();
        mean_agreement += (squares - n) / (n * (n - 1.0));
    }
    mean_agreement /= n_items;
    let expected: f64 = totals
        .values()
        .map(|c| {
            let p = c / (n_items * n);
            p * p
        })
        .sum();
    chance_corrected(mean_agreement, expected)
}

/// The four label tasks annotated for every event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Task {
    #[serde(rename = "Bel(A)")]
    BelA,
    #[serde(rename = "Bel(B)")]
    BelB,
    #[serde(rename = "CG(A)")]
    CgA,
    #[serde(rename = "CG(B)")]
    CgB,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::BelA, Task::BelB, Task::CgA, Task::CgB];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::BelA => "Bel(A)",
            Task::BelB => "Bel(B)",
            Task::CgA => "CG(A)",
            Task::CgB => "CG(B)",
        })
    }
}

/// Per-task item labels of one annotator: task → item → label token.
pub type TaskLabels = BTreeMap<Task, BTreeMap<String, String>>;

/// Final labels of every event in `states`, as token strings. Items are
/// keyed `dialogue/event`; unannotated cells become `0`.
pub fn task_labels<'a, I>(states: I) -> TaskLabels
where
    I: IntoIterator<Item = &'a DialogueState>,
{
    let mut out = TaskLabels::new();
    for state in states {
        for e in state.events() {
            let item = format!("{}/{}", state.id(), e.id);
            for task in Task::ALL {
                let label = match task {
                    Task::BelA | Task::BelB => {
                        let sp = if task == Task::BelA { Speaker::A } else { Speaker::B };
                        state.final_belief(&e.id, sp).map(|l| l.token().to_string())
                    }
                    Task::CgA | Task::CgB => {
                        let sp = if task == Task::CgA { Speaker::A } else { Speaker::B };
                        state.final_cg(&e.id, sp).map(|l| l.kind().token().to_string())
                    }
                }
                .expect("event is registered");
                out.entry(task).or_default().insert(item.clone(), label);
            }
        }
    }
    out
}

fn pair_table(
    task: Task,
    a: (&str, &TaskLabels),
    b: (&str, &TaskLabels),
) -> Result<LabelTable, AgreementError> {
    let missing = |who: &str| AgreementError::TaskCoverage(format!("{who} has no {task} labels"));
    let la = a.1.get(&task).ok_or_else(|| missing(a.0))?;
    let lb = b.1.get(&task).ok_or_else(|| missing(b.0))?;
    if la.keys().ne(lb.keys()) {
        return Err(AgreementError::TaskCoverage(format!(
            "{} and {} labeled different items for {task}",
            a.0, b.0
        )));
    }
    let mut table = LabelTable::new(&["a", "b"]);
    for (item, label) in la {
        table.insert(item, "a", label)?;
        table.insert(item, "b", &lb[item])?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseReport {
    pub annotators: Vec<String>,
    /// Mean over the four tasks of Cohen's kappa, symmetric, 1.0 diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// Task-level kappas for each unordered pair `(i, j)` with `i < j`.
    pub per_task: Vec<PairTaskKappa>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTaskKappa {
    pub first: String,
    pub second: String,
    pub kappas: BTreeMap<Task, f64>,
}

/// Pairwise mean Cohen's kappa across Bel(A), Bel(B), CG(A), CG(B).
pub fn pairwise_report(
    annotations: &BTreeMap<String, TaskLabels>,
) -> Result<PairwiseReport, AgreementError> {
    let annotators: Vec<String> = annotations.keys().cloned().collect();
    let k = annotators.len();
    let mut matrix = vec![vec![1.0; k]; k];
    let mut per_task = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let a = (annotators[i].as_str(), &annotations[&annotators[i]]);
            let b = (annotators[j].as_str(), &annotations[&annotators[j]]);
            let mut kappas = BTreeMap::new();
            for task in Task::ALL {
                kappas.insert(task, cohen_kappa(&pair_table(task, a, b)?)?);
            }
            let mean = kappas.values().sum::<f64>() / kappas.len() as f64;
            matrix[i][j] = mean;
            matrix[j][i] = mean;
            per_task.push(PairTaskKappa {
                first: annotators[i].clone(),
                second: annotators[j].clone(),
                kappas,
            });
        }
    }
    // Diagonal entries still require full task coverage.
    for (name, labels) in annotations {
        for task in Task::ALL {
            if !labels.contains_key(&task) {
                return Err(AgreementError::TaskCoverage(format!("{name} has no {task} labels")));
            }
        }
    }
    Ok(PairwiseReport {
        annotators,
        matrix,
        per_task,
    })
}

/// Fleiss' kappa with every (task, item) cell pooled as one item.
pub fn fleiss_across_tasks(
    annotations: &BTreeMap<String, TaskLabels>,
) -> Result<f64, AgreementError> {
    let raters: Vec<&String> = annotations.keys().collect();
    let mut table = LabelTable::new(&raters);
    for (name, labels) in annotations {
        for task in Task::ALL {
            let items = labels
                .get(&task)
                .ok_or_else(|| AgreementError::TaskCoverage(format!("{name} has no {task} labels")))?;
            for (item, label) in items {
                table.insert(&format!("{task}|{item}"), name, label)?;
            }
        }
    }
    fleiss_kappa(&table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::LexicalSimilarity;

    struct Table(Vec<(&'static str, &'static str, f64)>);

    impl SimilarityProvider for Table {
        fn kind(&self) -> crate::similarity::ProviderKind {
            crate::similarity::ProviderKind::Precomputed
        }

        fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
            Ok(self
                .0
                .iter()
                .find(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a))
                .map_or(0.0, |t| t.2))
        }
    }

    #[test]
    fn mapping_examples() {
        let m = ScoreMatrix::from_rows(&[vec![0.3]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 0)]);
        let m = ScoreMatrix::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 0), (1, 1)]);
        assert!(ScoreMatrix::from_rows(&[vec![0.1], vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn mapping_ties_break_lexicographically() {
        let m = ScoreMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 0), (1, 1)]);
        let m = ScoreMatrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 0)]);
        let m = ScoreMatrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 0)]);
        let m = ScoreMatrix::from_rows(&[vec![0.2, 0.7, 0.7], vec![0.7, 0.2, 0.2]]).unwrap();
        assert_eq!(best_mapping(&m), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn embert_examples() {
        let same = ["A got to see everybody"];
        assert_eq!(embert(&EventSetPair::new(&same, &same), &LexicalSimilarity).unwrap(), 1.0);
        assert_eq!(embert(&EventSetPair::new(&["x"], &[]), &LexicalSimilarity).unwrap(), 0.0);
        assert_eq!(embert(&EventSetPair::new::<&str>(&[], &[]), &LexicalSimilarity).unwrap(), 1.0);
        let f = Table(vec![("a", "c", 0.8), ("b", "c", 0.6)]);
        let s = embert(&EventSetPair::new(&["a", "b"], &["c"]), &f).unwrap();
        assert!((s - 0.4).abs() < 1e-12);
    }

    #[test]
    fn embert_grouped_averages_groups() {
        let r: BTreeMap<String, Vec<String>> =
            [("1".to_string(), vec!["a b".to_string()]), ("2".to_string(), vec!["x".to_string()])].into();
        let c: BTreeMap<String, Vec<String>> = [("1".to_string(), vec!["a b".to_string()])].into();
        assert_eq!(embert_grouped(&r, &c, &LexicalSimilarity).unwrap(), 0.5);
    }

    #[test]
    fn cohen_examples() {
        let seq = vec!["a", "b", "a", "a", "b"];
        assert_eq!(cohen_kappa(&LabelTable::from_sequences(&[seq.clone(), seq])).unwrap(), 1.0);
        // p_o = 0.5, marginals 0.5/0.5 on both sides → p_e = 0.5
        let t = LabelTable::from_sequences(&[vec!["a", "a", "b", "b"], vec!["a", "b", "a", "b"]]);
        assert_eq!(cohen_kappa(&t).unwrap(), 0.0);
        let three = LabelTable::from_sequences(&[vec!["a"], vec!["a"], vec!["a"]]);
        assert_eq!(cohen_kappa(&three), Err(AgreementError::RaterCount(3)));
        let mut partial = LabelTable::new(&["x", "y"]);
        partial.insert("i1", "x", "a").unwrap();
        assert!(matches!(cohen_kappa(&partial), Err(AgreementError::IncompleteTable { .. })));
        assert_eq!(
            partial.insert("i1", "z", "a"),
            Err(AgreementError::UnknownRater("z".into()))
        );
        assert_eq!(cohen_kappa(&LabelTable::new(&["x", "y"])), Err(AgreementError::EmptyTable));
    }

    #[test]
    fn fleiss_unanimity() {
        let t = LabelTable::from_sequences(&[vec!["a", "b", "c"], vec!["a", "b", "c"], vec!["a", "b", "c"]]);
        assert_eq!(fleiss_kappa(&t).unwrap(), 1.0);
        let single = LabelTable::from_sequences(&[vec!["a", "a"], vec!["a", "a"]]);
        assert_eq!(fleiss_kappa(&single).unwrap(), 1.0);
    }

    fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn pairwise_errors_on_missing_task() {
        let full: TaskLabels = Task::ALL
            .into_iter()
            .map(|t| (t, labels(&[("e1", "CT+"), ("e2", "PS")])))
            .collect();
        let mut partial = full.clone();
        partial.remove(&Task::CgB);
        let ann: BTreeMap<String, TaskLabels> =
            [("a1".to_string(), full.clone()), ("a2".to_string(), partial)].into();
        assert!(matches!(pairwise_report(&ann), Err(AgreementError::TaskCoverage(_))));

        let mut other_items = full.clone();
        other_items.insert(Task::BelA, labels(&[("e1", "CT+"), ("e3", "PS")]));
        let ann: BTreeMap<String, TaskLabels> =
            [("a1".to_string(), full.clone()), ("a2".to_string(), other_items)].into();
        assert!(matches!(pairwise_report(&ann), Err(AgreementError::TaskCoverage(_))));

        let ann: BTreeMap<String, TaskLabels> = [("a1".to_string(), full)].into();
        assert_eq!(pairwise_report(&ann).unwrap().matrix, vec![vec![1.0]]);
    }
}
