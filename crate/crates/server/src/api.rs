use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cgw_core::agreement::{self, EventSetPair, LabelTable};
use cgw_core::corpus_io;
use cgw_core::heuristics::{self, DEFAULT_THRESHOLD};
use cgw_core::similarity::SimilarityProvider;
use cgw_core::{
    BeliefLabel, BeliefRecord, CgRecord, DialogueState, EngineError, Event, EventId, Mutation,
    Speaker, UtteranceIndex,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::store::{Store, StoreError};

pub struct App {
    pub store: Store,
    pub provider: Arc<dyn SimilarityProvider>,
    pub threshold: f64,
    sessions: Mutex<Sessions>,
}

impl App {
    pub fn new(store: Store, provider: Arc<dyn SimilarityProvider>) -> Self {
        App {
            store,
            provider,
            threshold: DEFAULT_THRESHOLD,
            sessions: Mutex::new(Sessions::default()),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

type Shared = Arc<App>;

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/dialogues", get(list_dialogues).post(create_dialogue))
        .route("/dialogues/import", post(import_dialogue))
        .route("/dialogues/{id}", get(get_dialogue))
        .route("/dialogues/{id}/export", get(export_dialogue))
        .route("/dialogues/{id}/utterances", post(post_utterance))
        .route("/dialogues/{id}/events", post(post_event))
        .route("/dialogues/{id}/beliefs", post(post_belief))
        .route("/dialogues/{id}/cg", post(post_cg))
        .route("/dialogues/{id}/mutations", post(post_mutation))
        .route("/dialogues/{id}/history/{event}", get(get_history))
        .route("/dialogues/{id}/suggest/{event}", get(get_suggestion))
        .route("/dialogues/{id}/diagnostics", get(get_diagnostics))
        .route("/dialogues/{id}/sessions", post(open_session))
        .route(
            "/sessions/{sid}",
            get(get_session).patch(move_session).delete(close_session),
        )
        .route("/agreement/embert", post(post_embert))
        .route("/agreement/kappa", post(post_kappa))
        .layer(CorsLayer::permissive())
        .with_state(app)
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug)]
pub enum ApiError {
    BadRequest { pointer: String, message: String },
    NotFound(String),
    Conflict(String),
    Rejected(EngineError),
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::NotFound(e.to_string()),
            StoreError::Exists(_) | StoreError::Conflict { .. } => ApiError::Conflict(e.to_string()),
            StoreError::BadId(_) => ApiError::BadRequest {
                pointer: "/id".into(),
                message: e.to_string(),
            },
            StoreError::Engine(EngineError::UnknownEvent(_)) => ApiError::NotFound(e.to_string()),
            StoreError::Engine(err) => ApiError::Rejected(err),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest { pointer, message } => (
                StatusCode::BAD_REQUEST,
                json!({"code": "SCHEMA", "pointer": pointer, "message": message}),
            ),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({"code": "NOT_FOUND", "message": m})),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({"code": "CONFLICT", "message": m})),
            ApiError::Rejected(e) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({
                    "code": e.code(),
                    "message": e.to_string(),
                    "diagnostics": [{
                        "severity": "error",
                        "code": e.code(),
                        "event": e.event(),
                        "message": e.to_string(),
                    }],
                }),
            ),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"code": "INTERNAL", "message": m}),
            ),
        };
        (status, Json(body)).into_response()
    }
}

fn bad_request(pointer: &str, message: impl Into<String>) -> ApiError {
    ApiError::BadRequest {
        pointer: pointer.into(),
        message: message.into(),
    }
}

/// Body parsing with JSON-pointer locations; every schema problem is a 400.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| bad_request(&corpus_io::json_pointer(e.path()), e.inner().to_string()))?;
    de.end().map_err(|e| bad_request("", e.to_string()))?;
    Ok(value)
}

/// `If-Match: "<revision>"` (quotes optional).
fn expected_revision(headers: &HeaderMap) -> Result<Option<u64>, ApiError> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = value.to_str().unwrap_or_default().trim();
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse()
        .map(Some)
        .map_err(|_| bad_request("", format!("bad If-Match revision {text:?}")))
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("digits are a valid header")
}

fn with_etag(revision: u64, status: StatusCode, body: Value) -> Response {
    let mut resp = (status, Json(body)).into_response();
    resp.headers_mut().insert(header::ETAG, etag(revision));
    resp
}

// ---------------------------------------------------------------------------
// dialogues

#[derive(Serialize)]
struct Summary<'a> {
    id: &'a str,
    revision: u64,
    utterances: usize,
    events: usize,
    records: usize,
}

fn summary(s: &DialogueState) -> Summary<'_> {
    Summary {
        id: s.id(),
        revision: s.revision(),
        utterances: s.utterances().len(),
        events: s.events().len(),
        records: s.records().len(),
    }
}

async fn list_dialogues(State(app): State<Shared>) -> Result<Json<Value>, ApiError> {
    let mut out = Vec::new();
    for id in app.store.ids() {
        let s = app.store.get(&id)?;
        out.push(serde_json::to_value(summary(&s)).unwrap());
    }
    Ok(Json(json!({ "dialogues": out })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUtterance {
    speaker: Speaker,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewDialogue {
    id: String,
    #[serde(default)]
    utterances: Vec<NewUtterance>,
}

async fn create_dialogue(State(app): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: NewDialogue = parse_body(&body)?;
    let mut state = DialogueState::new(req.id);
    for (i, u) in req.utterances.into_iter().enumerate() {
        state
            .add_utterance(u.speaker, u.text)
            .map_err(|e| bad_request(&format!("/utterances/{i}/text"), e.to_string()))?;
    }
    let s = app.store.create(state).await?;
    Ok(with_etag(s.revision(), StatusCode::CREATED, serde_json::to_value(summary(&s)).unwrap()))
}

async fn import_dialogue(State(app): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let state = corpus_io::from_json(&body).map_err(|e| match e {
        corpus_io::CorpusError::Json { pointer, message } => ApiError::BadRequest { pointer, message },
        other => bad_request("", other.to_string()),
    })?;
    let s = app.store.create(state).await?;
    Ok(with_etag(s.revision(), StatusCode::CREATED, serde_json::to_value(summary(&s)).unwrap()))
}

#[derive(Deserialize)]
struct AtQuery {
    at: Option<UtteranceIndex>,
}

fn labels_by_speaker<F>(s: &DialogueState, mut label: F) -> BTreeMap<&'static str, BTreeMap<String, String>>
where
    F: FnMut(&EventId, Speaker) -> Option<String>,
{
    Speaker::BOTH
        .into_iter()
        .map(|sp| {
            let m = s
                .events()
                .iter()
                .filter_map(|e| label(&e.id, sp).map(|l| (e.id.to_string(), l)))
                .collect();
            (sp.as_str(), m)
        })
        .collect()
}

/// The full dialogue plus belief and CG state at `at` (default: last
/// utterance). `beliefs` is the settled view, `beliefs_known` only uses
/// evidence seen by `at`.
async fn get_dialogue(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<AtQuery>,
) -> Result<Response, ApiError> {
    let s = app.store.get(&id)?;
    let at = q.at.unwrap_or(s.last_index());
    if at > s.last_index() {
        return Err(bad_request("", format!("at={at} is beyond the last utterance {}", s.last_index())));
    }
    let present = |l: BeliefLabel| (!l.is_null()).then(|| l.to_string());
    let beliefs = labels_by_speaker(&s, |e, sp| s.belief_at(e, sp, at).ok().and_then(present));
    let known = labels_by_speaker(&s, |e, sp| s.belief_known_by(e, sp, at).ok().and_then(present));
    let cg: BTreeMap<&str, BTreeMap<String, String>> = Speaker::BOTH
        .into_iter()
        .map(|sp| {
            let m = s
                .cg_state(sp, at)
                .into_iter()
                .map(|(e, l)| (e.to_string(), l.to_string()))
                .collect();
            (sp.as_str(), m)
        })
        .collect();
    let body = json!({
        "id": s.id(),
        "revision": s.revision(),
        "at": at,
        "last_index": s.last_index(),
        "utterances": s.utterances(),
        "events": s.events_in_dialogue_order(),
        "beliefs": beliefs,
        "beliefs_known": known,
        "cg": cg,
    });
    Ok(with_etag(s.revision(), StatusCode::OK, body))
}

async fn export_dialogue(State(app): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.store.get(&id)?;
    let mut resp = (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        corpus_io::to_json(&s),
    )
        .into_response();
    resp.headers_mut().insert(header::ETAG, etag(s.revision()));
    Ok(resp)
}

async fn mutate(app: &App, id: &str, headers: &HeaderMap, m: Mutation) -> Result<Arc<DialogueState>, ApiError> {
    let expected = expected_revision(headers)?;
    Ok(app.store.mutate(id, expected, m).await?)
}

async fn post_utterance(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let u: NewUtterance = parse_body(&body)?;
    let s = mutate(&app, &id, &headers, Mutation::AddUtterance { speaker: u.speaker, text: u.text }).await?;
    Ok(with_etag(
        s.revision(),
        StatusCode::OK,
        json!({"revision": s.revision(), "index": s.last_index()}),
    ))
}

async fn post_event(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let e: Event = parse_body(&body)?;
    let event_id = e.id.clone();
    let s = mutate(&app, &id, &headers, Mutation::AddEvent(e)).await?;
    Ok(with_etag(s.revision(), StatusCode::OK, json!({"revision": s.revision(), "id": event_id})))
}

async fn post_belief(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let r: BeliefRecord = parse_body(&body)?;
    let s = mutate(&app, &id, &headers, Mutation::RecordBelief(r)).await?;
    Ok(with_etag(s.revision(), StatusCode::OK, json!({"revision": s.revision()})))
}

async fn post_cg(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let r: CgRecord = parse_body(&body)?;
    let s = mutate(&app, &id, &headers, Mutation::RecordCg(r)).await?;
    Ok(with_etag(s.revision(), StatusCode::OK, json!({"revision": s.revision()})))
}

async fn post_mutation(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let m: Mutation = parse_body(&body)?;
    let s = mutate(&app, &id, &headers, m).await?;
    Ok(with_etag(s.revision(), StatusCode::OK, json!({"revision": s.revision()})))
}

async fn get_history(
    State(app): State<Shared>,
    Path((id, event)): Path<(String, String)>,
) -> Result<Json<Value>, ApiError> {
    let s = app.store.get(&id)?;
    let history = s
        .history(&EventId::from(event))
        .map_err(|e| ApiError::NotFound(e.to_string()))?;
    Ok(Json(json!({ "history": history })))
}

#[derive(Deserialize)]
struct ThresholdQuery {
    threshold: Option<f64>,
}

/// Never mutates the dialogue.
async fn get_suggestion(
    State(app): State<Shared>,
    Path((id, event)): Path<(String, String)>,
    Query(q): Query<ThresholdQuery>,
) -> Result<Json<Value>, ApiError> {
    let s = app.store.get(&id)?;
    let event = EventId::from(event);
    if s.event(&event).is_none() {
        return Err(ApiError::NotFound(format!("unknown event {event}")));
    }
    let threshold = q.threshold.unwrap_or(app.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(bad_request("", format!("threshold {threshold} is outside [0, 1]")));
    }
    let provider = app.provider.clone();
    let suggestion = tokio::task::spawn_blocking(move || {
        heuristics::suggest(&s, &event, provider.as_ref(), threshold)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(serde_json::to_value(suggestion).unwrap()))
}

async fn get_diagnostics(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = app.store.get(&id)?;
    Ok(Json(json!({ "revision": s.revision(), "diagnostics": s.validate() })))
}

// ---------------------------------------------------------------------------
// sessions

#[derive(Debug, Clone, Serialize)]
struct Session {
    id: String,
    dialogue: String,
    annotator: String,
    cursor: UtteranceIndex,
    #[serde(skip)]
    seen_revision: u64,
    dirty: bool,
}

/// One writer session per dialogue. Sessions are advisory: they track the
/// annotator's reading position, while write safety comes from revisions.
#[derive(Default)]
struct Sessions {
    next: u64,
    by_id: BTreeMap<String, Session>,
}

impl Sessions {
    fn holder(&self, dialogue: &str) -> Option<&Session> {
        self.by_id.values().find(|s| s.dialogue == dialogue)
    }
}

fn session_view(mut s: Session, state: &DialogueState) -> Value {
    s.dirty = s.seen_revision != state.revision();
    serde_json::to_value(s).unwrap()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenSession {
    annotator: String,
    #[serde(default)]
    cursor: UtteranceIndex,
}

async fn open_session(
    State(app): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: OpenSession = parse_body(&body)?;
    if req.annotator.trim().is_empty() {
        return Err(bad_request("/annotator", "annotator must not be empty"));
    }
    let state = app.store.get(&id)?;
    if req.cursor > state.last_index() {
        return Err(bad_request("/cursor", format!("cursor must be in 0..={}", state.last_index())));
    }
    let mut sessions = app.sessions.lock().unwrap();
    if let Some(held) = sessions.holder(&id) {
        if held.annotator != req.annotator {
            return Err(ApiError::Conflict(format!(
                "dialogue {id:?} has an open session for {:?}",
                held.annotator
            )));
        }
        let held = held.clone();
        return Ok((StatusCode::OK, Json(session_view(held, &state))).into_response());
    }
    sessions.next += 1;
    let session = Session {
        id: format!("s{}", sessions.next),
        dialogue: id,
        annotator: req.annotator,
        cursor: req.cursor,
        seen_revision: state.revision(),
        dirty: false,
    };
    sessions.by_id.insert(session.id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json(session_view(session, &state))).into_response())
}

fn find_session(app: &App, sid: &str) -> Result<Session, ApiError> {
    app.sessions
        .lock()
        .unwrap()
        .by_id
        .get(sid)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {sid:?}")))
}

async fn get_session(State(app): State<Shared>, Path(sid): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = find_session(&app, &sid)?;
    let state = app.store.get(&session.dialogue)?;
    Ok(Json(session_view(session, &state)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveSession {
    cursor: UtteranceIndex,
}

/// Moves the cursor and marks the session as caught up.
async fn move_session(
    State(app): State<Shared>,
    Path(sid): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: MoveSession = parse_body(&body)?;
    let session = find_session(&app, &sid)?;
    let state = app.store.get(&session.dialogue)?;
    if req.cursor > state.last_index() {
        return Err(bad_request("/cursor", format!("cursor must be in 0..={}", state.last_index())));
    }
    let mut sessions = app.sessions.lock().unwrap();
    let s = sessions
        .by_id
        .get_mut(&sid)
        .ok_or_else(|| ApiError::NotFound(format!("unknown session {sid:?}")))?;
    s.cursor = req.cursor;
    s.seen_revision = state.revision();
    Ok(Json(session_view(s.clone(), &state)))
}

async fn close_session(State(app): State<Shared>, Path(sid): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.lock().unwrap().by_id.remove(&sid) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::NotFound(format!("unknown session {sid:?}"))),
    }
}

// ---------------------------------------------------------------------------
// agreement

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbertRequest {
    reference: Vec<String>,
    compared: Vec<String>,
}

async fn post_embert(State(app): State<Shared>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EmbertRequest = parse_body(&body)?;
    let provider = app.provider.clone();
    let score = tokio::task::spawn_blocking(move || {
        agreement::embert(&EventSetPair::new(&req.reference, &req.compared), provider.as_ref())
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(json!({ "embert": score })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KappaRequest {
    /// One label sequence per rater, aligned by item.
    raters: Vec<Vec<String>>,
}

async fn post_kappa(body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: KappaRequest = parse_body(&body)?;
    let table = LabelTable::from_sequences(&req.raters);
    let unprocessable = |e: agreement::AgreementError| bad_request("/raters", e.to_string());
    let fleiss = agreement::fleiss_kappa(&table).map_err(unprocessable)?;
    let cohen = if req.raters.len() == 2 {
        Some(agreement::cohen_kappa(&table).map_err(unprocessable)?)
    } else {
        None
    };
    Ok(Json(json!({ "cohen": cohen, "fleiss": fleiss })))
}
