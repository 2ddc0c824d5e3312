//! The `cgw` command-line tool.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use cgw_core::corpus_io::{self, CorpusError};
use cgw_core::DialogueState;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{path}: bad config: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

const SUFFIXES: [&str; 5] = [".cg.json", ".cga.tsv", ".pred.tsv", ".tsv", ".txt"];

/// Dialogue id derived from a file name: `dir/d01.cg.json` is `d01`.
pub fn dialogue_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in SUFFIXES {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    path.file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or(name)
}

/// Loads a `.cg.json`, an annotation grid (`.tsv`) or a transcript (`.txt`).
pub fn load_dialogue(path: &Path) -> Result<DialogueState, CliError> {
    let corpus = |source| CliError::Corpus {
        path: path.to_path_buf(),
        source,
    };
    let name = path.to_string_lossy();
    if name.ends_with(".json") {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        return corpus_io::from_json(&bytes).map_err(corpus);
    }
    let text = read_text(path)?;
    let id = dialogue_id(path);
    if name.ends_with(".tsv") {
        corpus_io::parse_annotation_tsv(&id, &text).map_err(corpus)
    } else if name.ends_with(".txt") {
        corpus_io::state_from_transcript(&id, &text).map_err(corpus)
    } else {
        Err(CliError::Usage(format!(
            "{}: expected a .cg.json, .tsv or .txt file",
            path.display()
        )))
    }
}

/// Expands directories into the dialogue files they contain, sorted.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|source| CliError::Io {
                    path: input.clone(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    let n = p.to_string_lossy();
                    n.ends_with(".cg.json") || n.ends_with(".cga.tsv")
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "cgw", version, about = "Common-ground dialogue annotation workbench")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Config file (default: ./cgw.toml when present).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a transcript and/or annotation grid to canonical JSON.
    Import(ImportArgs),
    /// Check annotation consistency.
    Validate(FilesArgs),
    /// Label distribution over a corpus.
    Stats(FilesArgs),
    /// Inter-annotator agreement.
    Agree(AgreeArgs),
    /// Rule-based CG prediction from gold beliefs.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Transcript with `A: ...` / `B: ...` lines.
    #[arg(long, value_name = "FILE")]
    pub transcript: Option<PathBuf>,
    /// Annotation grid (.cga.tsv).
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<PathBuf>,
    /// Dialogue id (default: derived from the file name).
    #[arg(long)]
    pub id: Option<String>,
    /// Output file (default: stdout).
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilesArgs {
    /// Dialogue files or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Embert,
    Cohen,
    Fleiss,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ProviderArgs {
    /// Similarity provider: lexical, precomputed or remote.
    #[arg(long)]
    pub provider: Option<String>,
    /// JSON Lines vectors for the precomputed provider.
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Base URL of the embedding service for the remote provider.
    #[arg(long, env = "CGW_EMBED_URL", value_name = "URL")]
    pub embed_url: Option<String>,
    /// Negative cosine handling: `on` clamps to 0, `rescale` maps [-1,1] to [0,1].
    #[arg(long, default_value = "on", value_name = "on|rescale")]
    pub cosine_clamp: String,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// For embert: event lists or dialogues. For kappas: one file or
    /// directory per annotator.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BeliefsAt {
    Final,
    Turn,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// JA/IN similarity threshold (default 0.92).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Beliefs the rules read: final labels or those holding at the event's utterance.
    #[arg(long, value_enum, default_value = "final")]
    pub beliefs_at: BeliefsAt,
    /// Comma-separated thresholds, e.g. "0,0.2,0.4,0.6,0.8,0.9,0.92,0.95,1";
    /// scores each against the inputs' gold CG.
    #[arg(long, value_name = "LIST")]
    pub sweep: Option<String>,
    /// Output file (one input) or directory (several inputs).
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Bel,
    Cg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: EvalTask,
    /// Gold dialogue (.cg.json or .cga.tsv).
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Predictions (.pred.tsv).
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Leave items whose gold label is `0` out of accuracy.
    #[arg(long)]
    pub accuracy_skip_null: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one (default 8080).
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding the dialogue files (default ./data).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Default threshold for suggestions.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

/// What a command prints: human text or JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub json: serde_json::Value,
}

impl Output {
    pub fn render(&self, json: bool) -> String {
        let mut s = if json {
            serde_json::to_string_pretty(&self.json).expect("JSON output")
        } else {
            self.text.clone()
        };
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    }
}

/// Result of a command; `failed` marks a domain failure whose report should
/// still be printed (e.g. validation errors).
pub struct Outcome {
    pub output: Output,
    pub failed: bool,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let config = config::Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Import(a) => commands::import(a),
        Command::Validate(a) => commands::validate(a),
        Command::Stats(a) => commands::stats(a),
        Command::Agree(a) => commands::agree(a, &config),
        Command::Predict(a) => commands::predict(a, &config),
        Command::Eval(a) => commands::eval(a),
        Command::Serve(a) => commands::serve(a, &config, cli.json),
    }
}
