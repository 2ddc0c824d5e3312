//! Dialogue store: immutable snapshots for readers, one writer per dialogue,
//! and a durable `<id>.cg.json` file per dialogue.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use cgw_core::corpus_io::{self, CorpusError};
use cgw_core::{DialogueState, EngineError, Mutation};
use thiserror::Error;

pub const FILE_SUFFIX: &str = ".cg.json";
const TMP_SUFFIX: &str = ".tmp";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown dialogue {0:?}")]
    NotFound(String),
    #[error("dialogue {0:?} already exists")]
    Exists(String),
    #[error("invalid dialogue id {0:?}")]
    BadId(String),
    #[error("stale revision: expected {expected}, current is {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Corrupt { path: PathBuf, source: CorpusError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ids double as file names.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

struct Slot {
    snapshot: RwLock<Arc<DialogueState>>,
    writer: tokio::sync::Mutex<()>,
}

impl Slot {
    fn new(state: DialogueState) -> Self {
        Slot {
            snapshot: RwLock::new(Arc::new(state)),
            writer: tokio::sync::Mutex::new(()),
        }
    }

    fn current(&self) -> Arc<DialogueState> {
        self.snapshot.read().unwrap().clone()
    }
}

pub struct Store {
    dir: PathBuf,
    slots: RwLock<BTreeMap<String, Arc<Slot>>>,
    create: tokio::sync::Mutex<()>,
}

impl Store {
    /// Opens (creating if needed) `dir` and loads every dialogue file in it.
    /// Leftover temporary files from an interrupted write are removed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut slots = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if name.starts_with('.') && name.ends_with(TMP_SUFFIX) {
                fs::remove_file(&path).map_err(io_err(&path))?;
                continue;
            }
            let Some(id) = name.strip_suffix(FILE_SUFFIX) else {
                continue;
            };
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let state = corpus_io::from_json(&bytes).map_err(|source| StoreError::Corrupt {
                path: path.clone(),
                source,
            })?;
            if state.id() != id {
                return Err(StoreError::Corrupt {
                    path: path.clone(),
                    source: CorpusError::Json {
                        pointer: "/id".into(),
                        message: format!("id {:?} does not match the file name", state.id()),
                    },
                });
            }
            slots.insert(id.to_string(), Arc::new(Slot::new(state)));
        }
        Ok(Store {
            dir,
            slots: RwLock::new(slots),
            create: tokio::sync::Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ids(&self) -> Vec<String> {
        self.slots.read().unwrap().keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<DialogueState>, StoreError> {
        Ok(self.slot(id)?.current())
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, StoreError> {
        self.slots
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}{FILE_SUFFIX}"))
    }

    /// Writes to a temporary file, syncs it, renames it over the target and
    /// syncs the directory.
    fn persist(&self, state: &DialogueState) -> Result<(), StoreError> {
        let target = self.path_of(state.id());
        let tmp = self.dir.join(format!(".{}{FILE_SUFFIX}{TMP_SUFFIX}", state.id()));
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(&corpus_io::to_json(state)).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        drop(file);
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
        File::open(&self.dir)
            .and_then(|d| d.sync_all())
            .map_err(io_err(&self.dir))?;
        Ok(())
    }

    pub async fn create(&self, state: DialogueState) -> Result<Arc<DialogueState>, StoreError> {
        if !valid_id(state.id()) {
            return Err(StoreError::BadId(state.id().to_string()));
        }
        let _guard = self.create.lock().await;
        if self.slots.read().unwrap().contains_key(state.id()) {
            return Err(StoreError::Exists(state.id().to_string()));
        }
        self.persist(&state)?;
        let slot = Arc::new(Slot::new(state));
        let snapshot = slot.current();
        self.slots
            .write()
            .unwrap()
            .insert(snapshot.id().to_string(), slot);
        Ok(snapshot)
    }

    /// Applies `mutation` if the dialogue is still at `expected` (when
    /// given). The new state is on disk before this returns.
    pub async fn mutate(
        &self,
        id: &str,
        expected: Option<u64>,
        mutation: Mutation,
    ) -> Result<Arc<DialogueState>, StoreError> {
        let slot = self.slot(id)?;
        let _guard = slot.writer.lock().await;
        let current = slot.current();
        if let Some(expected) = expected {
            if expected != current.revision() {
                return Err(StoreError::Conflict {
                    expected,
                    actual: current.revision(),
                });
            }
        }
        let mut next = DialogueState::clone(&current);
        next.apply(mutation)?;
        self.persist(&next)?;
        let next = Arc::new(next);
        *slot.snapshot.write().unwrap() = next.clone();
        Ok(next)
    }
}
