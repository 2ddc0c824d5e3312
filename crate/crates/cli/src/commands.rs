use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cgw_core::agreement::{self, EventSetPair, LabelTable, Task, TaskLabels};
use cgw_core::corpus_io::{self, PredictedLabels, Predictions};
use cgw_core::eval::{self, EvalReport, ScoreOptions, BELIEF_MACRO_CLASSES, CG_MACRO_CLASSES};
use cgw_core::heuristics::{self, BeliefMode, HeuristicConfig, Prediction, DEFAULT_THRESHOLD};
use cgw_core::similarity::{
    CosineMode, EmbeddingSimilarity, LexicalSimilarity, PrecomputedVectors, ProviderKind,
    RemoteEmbedder, SimilarityProvider,
};
use cgw_core::{CgKind, DialogueState, Severity, Speaker};
use serde_json::json;

use crate::config::Config;
use crate::{
    dialogue_id, expand_inputs, load_dialogue, read_text, write_bytes, AgreeArgs, BeliefsAt,
    CliError, EvalArgs, EvalTask, FilesArgs, ImportArgs, Metric, Outcome, Output, PredictArgs,
    ProviderArgs, ServeArgs,
};

fn ok(text: String, json: serde_json::Value) -> Result<Outcome, CliError> {
    Ok(Outcome {
        output: Output { text, json },
        failed: false,
    })
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

pub fn provider(args: &ProviderArgs, config: &Config) -> Result<Arc<dyn SimilarityProvider>, CliError> {
    let kind: ProviderKind = args
        .provider
        .as_deref()
        .or(config.provider.as_deref())
        .unwrap_or("lexical")
        .parse()
        .map_err(CliError::Usage)?;
    let mode: CosineMode = args
        .cosine_clamp
        .parse()
        .map_err(|e| CliError::Usage(format!("--cosine-clamp: {e}")))?;
    Ok(match kind {
        ProviderKind::Lexical => Arc::new(LexicalSimilarity),
        ProviderKind::Precomputed => {
            let path = args
                .vectors
                .as_ref()
                .or(config.vectors.as_ref())
                .ok_or_else(|| CliError::Usage("the precomputed provider needs --vectors FILE".into()))?;
            let vectors = PrecomputedVectors::from_jsonl(&read_text(path)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
            Arc::new(EmbeddingSimilarity::new(vectors).with_mode(mode))
        }
        ProviderKind::Remote => {
            let url = args
                .embed_url
                .as_deref()
                .or(config.embed_url.as_deref())
                .ok_or_else(|| {
                    CliError::Usage("the remote provider needs --embed-url or CGW_EMBED_URL".into())
                })?;
            Arc::new(EmbeddingSimilarity::new(RemoteEmbedder::http(url)).with_mode(mode))
        }
    })
}

// ---------------------------------------------------------------------------
// import / validate / stats

pub fn import(a: &ImportArgs) -> Result<Outcome, CliError> {
    let state = match (&a.transcript, &a.annotations) {
        (None, None) => {
            return Err(CliError::Usage(
                "import needs --transcript and/or --annotations".into(),
            ))
        }
        (Some(t), None) => {
            let id = a.id.clone().unwrap_or_else(|| dialogue_id(t));
            corpus_io::state_from_transcript(&id, &read_text(t)?).map_err(|source| CliError::Corpus {
                path: t.clone(),
                source,
            })?
        }
        (transcript, Some(grid)) => {
            let id = a.id.clone().unwrap_or_else(|| dialogue_id(grid));
            let state = corpus_io::parse_annotation_tsv(&id, &read_text(grid)?).map_err(|source| {
                CliError::Corpus {
                    path: grid.clone(),
                    source,
                }
            })?;
            if let Some(t) = transcript {
                let utterances = corpus_io::parse_transcript(&read_text(t)?).map_err(|source| {
                    CliError::Corpus {
                        path: t.clone(),
                        source,
                    }
                })?;
                if utterances.len() != state.utterances().len() {
                    return Err(CliError::Domain(format!(
                        "{} has {} utterances but {} has {}",
                        t.display(),
                        utterances.len(),
                        grid.display(),
                        state.utterances().len()
                    )));
                }
                if let Some(u) = utterances.iter().zip(state.utterances()).find(|(x, y)| x != y) {
                    return Err(CliError::Domain(format!(
                        "utterance {} differs between {} and {}",
                        u.0.index,
                        t.display(),
                        grid.display()
                    )));
                }
            }
            state
        }
    };
    let bytes = corpus_io::to_json(&state);
    let summary = json!({
        "id": state.id(),
        "utterances": state.utterances().len(),
        "events": state.events().len(),
        "records": state.records().len(),
    });
    match &a.output {
        Some(path) => {
            write_bytes(path, &bytes)?;
            ok(
                format!(
                    "wrote {} ({} utterances, {} events, {} records)",
                    path.display(),
                    state.utterances().len(),
                    state.events().len(),
                    state.records().len()
                ),
                summary,
            )
        }
        None => ok(
            String::from_utf8(bytes.clone()).expect("JSON is UTF-8"),
            serde_json::from_slice(&bytes).expect("canonical JSON parses"),
        ),
    }
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, DialogueState)>, CliError> {
    expand_inputs(inputs)?
        .into_iter()
        .map(|p| load_dialogue(&p).map(|s| (p, s)))
        .collect()
}

pub fn validate(a: &FilesArgs) -> Result<Outcome, CliError> {
    let mut text = String::new();
    let mut files = Vec::new();
    let (mut errors, mut warnings) = (0, 0);
    for (path, state) in load_all(&a.inputs)? {
        let diagnostics = state.validate();
        for d in &diagnostics {
            match d.severity {
                Severity::Error => errors += 1,
                Severity::Warning => warnings += 1,
            }
            writeln!(text, "{}\t{d}", path.display()).unwrap();
        }
        files.push(json!({"path": path, "id": state.id(), "diagnostics": diagnostics}));
    }
    writeln!(text, "{errors} error(s), {warnings} warning(s)").unwrap();
    Ok(Outcome {
        output: Output {
            text,
            json: json!({"files": files, "errors": errors, "warnings": warnings}),
        },
        failed: errors > 0,
    })
}

pub fn stats(a: &FilesArgs) -> Result<Outcome, CliError> {
    let states: Vec<DialogueState> = load_all(&a.inputs)?.into_iter().map(|x| x.1).collect();
    let d = eval::distribution(&states);
    ok(d.to_table(), serde_json::to_value(&d).unwrap())
}

// ---------------------------------------------------------------------------
// agreement

fn event_groups(path: &Path) -> Result<BTreeMap<String, Vec<String>>, CliError> {
    if path.to_string_lossy().ends_with(".events") {
        Ok(corpus_io::parse_event_list(&read_text(path)?))
    } else {
        Ok(corpus_io::event_groups(&load_dialogue(path)?))
    }
}

fn matrix_table(names: &[String], matrix: &[Vec<f64>]) -> String {
    let width = names.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = format!("{:width$}", "");
    for n in names {
        write!(out, "  {n:>width$}").unwrap();
    }
    out.push('\n');
    for (n, row) in names.iter().zip(matrix) {
        write!(out, "{n:width$}").unwrap();
        for v in row {
            write!(out, "  {v:>width$.2}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn annotator_name(path: &Path) -> String {
    if path.is_dir() {
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    } else {
        dialogue_id(path)
    }
}

fn annotations(inputs: &[PathBuf]) -> Result<BTreeMap<String, TaskLabels>, CliError> {
    let mut out = BTreeMap::new();
    for input in inputs {
        let name = annotator_name(input);
        let states: Vec<DialogueState> = load_all(std::slice::from_ref(input))?
            .into_iter()
            .map(|x| x.1)
            .collect();
        if out.insert(name.clone(), agreement::task_labels(&states)).is_some() {
            return Err(CliError::Usage(format!("two annotators are named {name:?}")));
        }
    }
    Ok(out)
}

pub fn agree(a: &AgreeArgs, config: &Config) -> Result<Outcome, CliError> {
    match a.metric {
        Metric::Embert => {
            let f = provider(&a.provider, config)?;
            let names: Vec<String> = a.inputs.iter().map(|p| annotator_name(p)).collect();
            let groups = a
                .inputs
                .iter()
                .map(|p| event_groups(p))
                .collect::<Result<Vec<_>, _>>()?;
            let grouped = groups.iter().all(|g| !g.contains_key(""));
            let flat: Vec<Vec<String>> = groups.iter().map(|g| g.values().flatten().cloned().collect()).collect();
            let k = a.inputs.len();
            let mut matrix = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in 0..k {
                    matrix[i][j] = if grouped {
                        agreement::embert_grouped(&groups[i], &groups[j], f.as_ref())
                    } else {
                        agreement::embert(&EventSetPair::new(&flat[i], &flat[j]), f.as_ref())
                    }
                    .map_err(domain)?;
                }
            }
            let text = format!("EMBERT ({})\n{}", f.kind(), matrix_table(&names, &matrix));
            ok(
                text,
                json!({"metric": "embert", "provider": f.kind().to_string(), "grouped": grouped, "annotators": names, "matrix": matrix}),
            )
        }
        Metric::Cohen => {
            let report = agreement::pairwise_report(&annotations(&a.inputs)?).map_err(domain)?;
            let mut text = format!(
                "Cohen's kappa, mean over tasks\n{}",
                matrix_table(&report.annotators, &report.matrix)
            );
            for p in &report.per_task {
                write!(text, "{} / {}:", p.first, p.second).unwrap();
                for (task, k) in &p.kappas {
                    write!(text, "  {task} {k:.2}").unwrap();
                }
                text.push('\n');
            }
            ok(text, json!({"metric": "cohen", "report": report}))
        }
        Metric::Fleiss => {
            let ann = annotations(&a.inputs)?;
            let pooled = agreement::fleiss_across_tasks(&ann).map_err(domain)?;
            let mut per_task = BTreeMap::new();
            let raters: Vec<&String> = ann.keys().collect();
            for task in Task::ALL {
                let mut table = LabelTable::new(&raters);
                for (name, labels) in &ann {
                    for (item, label) in labels.get(&task).into_iter().flatten() {
                        table.insert(item, name, label).map_err(domain)?;
                    }
                }
                per_task.insert(task.to_string(), agreement::fleiss_kappa(&table).map_err(domain)?);
            }
            let mut text = format!("Fleiss' kappa (all tasks)  {pooled:.2}\n");
            for (task, k) in &per_task {
                writeln!(text, "{task:<26} {k:.2}").unwrap();
            }
            ok(text, json!({"metric": "fleiss", "annotators": raters, "fleiss": pooled, "per_task": per_task}))
        }
    }
}

// ---------------------------------------------------------------------------
// prediction

fn check_threshold(t: f64, what: &str) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(CliError::Usage(format!("{what} {t} is outside [0, 1]")))
    }
}

/// Predicts every dialogue, one scoped thread per chunk; results keep input order.
fn predict_all(
    states: &[DialogueState],
    f: &dyn SimilarityProvider,
    config: HeuristicConfig,
) -> Result<Vec<Prediction>, CliError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(states.len().max(1));
    let chunk = states.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<Prediction>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = states
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| heuristics::predict_dialogue(s, f, config).map_err(domain))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction thread")).collect()
    });
    let mut out = Vec::with_capacity(states.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn predictions_file(p: &Prediction) -> Predictions {
    let mut out = Predictions::new();
    for e in &p.events {
        out.push(e.event.clone(), PredictedLabels::Cg(e.label, e.label))
            .expect("events are unique");
    }
    out
}

/// Gold and predicted CG kinds per speaker, aligned by event.
fn cg_pairs(states: &[DialogueState], preds: &[Prediction]) -> [(Vec<String>, Vec<String>); 2] {
    let mut out: [(Vec<String>, Vec<String>); 2] = Default::default();
    for (state, pred) in states.iter().zip(preds) {
        for e in &pred.events {
            for (k, sp) in Speaker::BOTH.into_iter().enumerate() {
                let gold = state.final_cg(&e.event, sp).expect("predicted events exist");
                out[k].0.push(gold.kind().token().to_string());
                out[k].1.push(e.label.kind().token().to_string());
            }
        }
    }
    out
}

fn speaker_averaged(pairs: &[(Vec<String>, Vec<String>); 2], classes: &[&str], options: &ScoreOptions) -> Result<[EvalReport; 3], CliError> {
    let a = eval::score_with(&pairs[0].0, &pairs[0].1, classes, options).map_err(domain)?;
    let b = eval::score_with(&pairs[1].0, &pairs[1].1, classes, options).map_err(domain)?;
    let avg = eval::speaker_avg(&a, &b).map_err(domain)?;
    Ok([a, b, avg])
}

pub fn parse_grid(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--sweep: bad threshold {t:?}")))?;
            check_threshold(v, "--sweep threshold")
        })
        .collect()
}

pub fn predict(a: &PredictArgs, config: &Config) -> Result<Outcome, CliError> {
    let threshold = check_threshold(
        a.threshold.or(config.threshold).unwrap_or(DEFAULT_THRESHOLD),
        "--threshold",
    )?;
    let grid = a.sweep.as_deref().map(parse_grid).transpose()?;
    let f = provider(&a.provider, config)?;
    let files = load_all(&a.inputs)?;
    let states: Vec<DialogueState> = files.iter().map(|x| x.1.clone()).collect();
    let beliefs = match a.beliefs_at {
        BeliefsAt::Final => BeliefMode::Final,
        BeliefsAt::Turn => BeliefMode::Turn,
    };

    if let Some(grid) = grid {
        let mut rows = Vec::new();
        let mut text = format!(
            "{:>9}  {:>6}  {:>6}  {:>6}  {:>8}  {:>8}  {:>7}\n",
            "threshold", "JA F1", "IN F1", "RT F1", "macro F1", "accuracy", "IN pred"
        );
        for t in grid {
            let preds = predict_all(&states, f.as_ref(), HeuristicConfig { threshold: t, beliefs })?;
            let [_, _, avg] = speaker_averaged(&cg_pairs(&states, &preds), &CG_MACRO_CLASSES, &ScoreOptions::default())?;
            let in_count: usize = preds.iter().map(|p| p.count(CgKind::In)).sum();
            writeln!(
                text,
                "{t:>9.2}  {:>6.2}  {:>6.2}  {:>6.2}  {:>8.2}  {:>8.2}  {in_count:>7}",
                avg.per_class_f1["JA"], avg.per_class_f1["IN"], avg.per_class_f1["RT"], avg.macro_f1, avg.accuracy
            )
            .unwrap();
            rows.push(json!({"threshold": t, "report": avg, "in_predictions": in_count}));
        }
        if let Some(path) = &a.output {
            write_bytes(path, text.as_bytes())?;
        }
        return ok(text, json!({"provider": f.kind().to_string(), "sweep": rows}));
    }

    let preds = predict_all(&states, f.as_ref(), HeuristicConfig { threshold, beliefs })?;
    let json = json!({"threshold": threshold, "provider": f.kind().to_string(), "dialogues": preds});
    match (&a.output, preds.len()) {
        (None, 1) => ok(corpus_io::write_predictions(&predictions_file(&preds[0])), json),
        (None, _) => Err(CliError::Usage("several inputs need -o DIR".into())),
        (Some(path), 1) if !path.is_dir() => {
            write_bytes(path, corpus_io::write_predictions(&predictions_file(&preds[0])).as_bytes())?;
            ok(format!("wrote {}", path.display()), json)
        }
        (Some(dir), _) => {
            if !dir.is_dir() {
                std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.clone(),
                    source,
                })?;
            }
            let mut text = String::new();
            for p in &preds {
                let path = dir.join(format!("{}.pred.tsv", p.dialogue));
                write_bytes(&path, corpus_io::write_predictions(&predictions_file(p)).as_bytes())?;
                writeln!(text, "wrote {}", path.display()).unwrap();
            }
            ok(text, json)
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation

pub fn eval(a: &EvalArgs) -> Result<Outcome, CliError> {
    let gold = load_dialogue(&a.gold)?;
    let preds = corpus_io::parse_predictions(&read_text(&a.pred)?).map_err(|source| CliError::Corpus {
        path: a.pred.clone(),
        source,
    })?;
    preds.check_events(&gold).map_err(domain)?;
    let mut pairs: [(Vec<String>, Vec<String>); 2] = Default::default();
    let cg = preds.cg();
    let bel = preds.beliefs();
    for e in gold.events_in_dialogue_order() {
        for (k, sp) in Speaker::BOTH.into_iter().enumerate() {
            let (g, p) = match a.task {
                EvalTask::Cg => (
                    gold.final_cg(&e.id, sp).map_err(domain)?.kind().token().to_string(),
                    cg.get(&e.id)
                        .map(|(x, y)| if sp == Speaker::A { x } else { y }.kind().token().to_string())
                        .unwrap_or_else(|| "0".into()),
                ),
                EvalTask::Bel => (
                    gold.final_belief(&e.id, sp).map_err(domain)?.token().to_string(),
                    bel.get(&e.id)
                        .map(|(x, y)| if sp == Speaker::A { x } else { y }.token().to_string())
                        .unwrap_or_else(|| "0".into()),
                ),
            };
            pairs[k].0.push(g);
            pairs[k].1.push(p);
        }
    }
    let classes: &[&str] = match a.task {
        EvalTask::Cg => &CG_MACRO_CLASSES,
        EvalTask::Bel => &BELIEF_MACRO_CLASSES,
    };
    let options = ScoreOptions {
        accuracy_skip: a.accuracy_skip_null.then(|| "0".to_string()),
    };
    let [ra, rb, avg] = speaker_averaged(&pairs, classes, &options)?;
    let task = match a.task {
        EvalTask::Cg => "cg",
        EvalTask::Bel => "bel",
    };
    ok(
        avg.to_table(),
        json!({"task": task, "items": pairs[0].0.len(), "speaker_a": ra, "speaker_b": rb, "average": avg}),
    )
}

// ---------------------------------------------------------------------------
// service

pub fn serve(a: &ServeArgs, config: &Config, json_out: bool) -> Result<Outcome, CliError> {
    let port = a.port.or(config.port).unwrap_or(8080);
    let data_dir = a
        .data_dir
        .clone()
        .or_else(|| config.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from("data"));
    let threshold = check_threshold(
        a.threshold.or(config.threshold).unwrap_or(DEFAULT_THRESHOLD),
        "--threshold",
    )?;
    let host: std::net::IpAddr = a
        .host
        .parse()
        .map_err(|_| CliError::Usage(format!("--host: bad address {:?}", a.host)))?;
    let f = provider(&a.provider, config)?;
    let store = cgw_server::Store::open(&data_dir).map_err(domain)?;
    let app = cgw_server::App::new(store, f).with_threshold(threshold);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(domain)?;
    runtime.block_on(async move {
        let (listener, addr) = cgw_server::bind(SocketAddr::new(host, port)).await.map_err(domain)?;
        let line = if json_out {
            json!({"listening": addr.to_string()}).to_string()
        } else {
            format!("listening on {addr}")
        };
        let mut stdout = std::io::stdout();
        writeln!(stdout, "{line}").and_then(|_| stdout.flush()).map_err(domain)?;
        cgw_server::serve(listener, app).await.map_err(domain)
    })?;
    ok("server stopped".into(), json!({"stopped": true}))
}
