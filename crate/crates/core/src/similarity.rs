//! Text similarity providers. Every provider returns scores in `[0, 1]`.
//!
//! * [`LexicalSimilarity`]: Jaccard overlap of normalized token sets.
//! * [`EmbeddingSimilarity`] over [`PrecomputedVectors`]: cosine of vectors
//!   read from a `.vec.jsonl` file keyed by exact text.
//! * [`EmbeddingSimilarity`] over [`RemoteEmbedder`]: cosine of vectors
//!   fetched from an embedding service (`POST {base}/v1/embed`) and cached.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("empty vector")]
    EmptyVector,
    #[error("non-finite vector component")]
    NonFinite,
    #[error("no precomputed vector for text {0:?}")]
    UnknownText(String),
    #[error("embedding transport failed: {0}")]
    Transport(String),
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("count mismatch: sent {sent} texts, received {received} vectors")]
    CountMismatch { sent: usize, received: usize },
    #[error("vectors file line {line}: {message}")]
    VectorsFile { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if values.is_empty() {
            return Err(SimilarityError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = SimilarityError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// How a raw cosine in `[-1, 1]` is mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CosineMode {
    /// `max(0, cos)`: unrelated and opposed texts both score ~0.
    #[default]
    Clamp,
    /// `(1 + cos) / 2`.
    Rescale,
}

impl FromStr for CosineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" | "clamp" => Ok(CosineMode::Clamp),
            "rescale" => Ok(CosineMode::Rescale),
            other => Err(format!("unknown cosine mode {other:?} (expected on|rescale)")),
        }
    }
}

fn raw_cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if u.dim() != v.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    let nu = u.0.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.0.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity clamped into `[0, 1]`.
pub fn cosine01(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    cosine_with(u, v, CosineMode::Clamp)
}

pub fn cosine_with(
    u: &EmbeddingVector,
    v: &EmbeddingVector,
    mode: CosineMode,
) -> Result<f64, SimilarityError> {
    let c = raw_cosine(u, v)?;
    Ok(match mode {
        CosineMode::Clamp => c.max(0.0),
        CosineMode::Rescale => (1.0 + c) / 2.0,
    })
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Jaccard coefficient over lower-cased, punctuation-stripped token sets.
/// Two texts without any tokens are identical (1.0).
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let ta = tokens(a);
    let tb = tokens(b);
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Lexical,
    Precomputed,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Lexical => "lexical",
            ProviderKind::Precomputed => "precomputed",
            ProviderKind::Remote => "remote",
        })
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(ProviderKind::Lexical),
            "precomputed" => Ok(ProviderKind::Precomputed),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(format!(
                "unknown provider {other:?} (expected lexical|precomputed|remote)"
            )),
        }
    }
}

pub trait SimilarityProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError>;

    /// Hint that the given texts are about to be compared. Batching
    /// providers use it to fetch everything in one round-trip.
    fn prepare(&self, _texts: &[&str]) -> Result<(), SimilarityError> {
        Ok(())
    }
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for Box<P> {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        (**self).similarity(a, b)
    }

    fn prepare(&self, texts: &[&str]) -> Result<(), SimilarityError> {
        (**self).prepare(texts)
    }
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for &P {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        (**self).similarity(a, b)
    }

    fn prepare(&self, texts: &[&str]) -> Result<(), SimilarityError> {
        (**self).prepare(texts)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalSimilarity;

impl SimilarityProvider for LexicalSimilarity {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Lexical
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        Ok(lexical_similarity(a, b))
    }
}

/// Something that turns texts into vectors, one per text, in order.
pub trait EmbeddingSource: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, SimilarityError>;
}

/// Vectors loaded from a JSON Lines file, one `{"text", "vector"}` per line.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedVectors {
    vectors: HashMap<String, EmbeddingVector>,
}

#[derive(Deserialize)]
struct VectorLine {
    text: String,
    vector: Vec<f64>,
}

impl PrecomputedVectors {
    pub fn from_jsonl(source: &str) -> Result<Self, SimilarityError> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (n, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SimilarityError::VectorsFile { line: n + 1, message };
            let parsed: VectorLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let vector = EmbeddingVector::new(parsed.vector).map_err(|e| err(e.to_string()))?;
            match dim {
                None => dim = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(err(format!("dimension {} differs from {d}", vector.dim())))
                }
                Some(_) => {}
            }
            vectors.insert(parsed.text, vector);
        }
        Ok(PrecomputedVectors { vectors })
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: EmbeddingVector) {
        self.vectors.insert(text.into(), vector);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingSource for PrecomputedVectors {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Precomputed
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, SimilarityError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(*t)
                    .cloned()
                    .ok_or_else(|| SimilarityError::UnknownText(t.to_string()))
            })
            .collect()
    }
}

/// Wire protocol of the embedding service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

pub trait EmbedTransport: Send + Sync {
    fn post(&self, request: &EmbedRequest) -> Result<EmbedResponse, SimilarityError>;
}

/// Blocking HTTP transport for `POST {base}/v1/embed`.
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpTransport {
            endpoint: format!("{}/v1/embed", base_url.trim_end_matches('/')),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl EmbedTransport for HttpTransport {
    fn post(&self, request: &EmbedRequest) -> Result<EmbedResponse, SimilarityError> {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| SimilarityError::Transport(e.to_string()))?;
        response
            .into_body()
            .read_json::<EmbedResponse>()
            .map_err(|e| SimilarityError::Malformed(e.to_string()))
    }
}

/// Client for a remote embedding service with a per-text cache.
pub struct RemoteEmbedder {
    transport: Box<dyn EmbedTransport>,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    caching: bool,
}

impl RemoteEmbedder {
    pub fn new(transport: impl EmbedTransport + 'static) -> Self {
        RemoteEmbedder {
            transport: Box::new(transport),
            cache: Mutex::new(HashMap::new()),
            caching: true,
        }
    }

    pub fn http(base_url: &str) -> Self {
        RemoteEmbedder::new(HttpTransport::new(base_url))
    }

    pub fn without_cache(mut self) -> Self {
        self.caching = false;
        self
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("embedding cache poisoned").len()
    }

    /// Embeds `texts`, fetching only those not already cached, in one
    /// request. Output order matches input order.
    pub fn remote_embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, SimilarityError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut missing: Vec<String> = Vec::new();
        if self.caching {
            let cache = self.cache.lock().expect("embedding cache poisoned");
            for t in texts {
                if !cache.contains_key(*t) && !missing.iter().any(|m| m == t) {
                    missing.push(t.to_string());
                }
            }
        } else {
            missing = texts.iter().map(|t| t.to_string()).collect();
        }

        let fetched = if missing.is_empty() {
            Vec::new()
        } else {
            self.fetch(&missing)?
        };

        if !self.caching {
            return Ok(fetched);
        }
        let mut cache = self.cache.lock().expect("embedding cache poisoned");
        if let Some(known) = cache.values().next().map(EmbeddingVector::dim) {
            if let Some(v) = fetched.iter().find(|v| v.dim() != known) {
                return Err(SimilarityError::DimensionMismatch {
                    left: known,
                    right: v.dim(),
                });
            }
        }
        for (text, vector) in missing.into_iter().zip(fetched) {
            cache.insert(text, vector);
        }
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }

    fn fetch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, SimilarityError> {
        let response = self.transport.post(&EmbedRequest {
            texts: texts.to_vec(),
        })?;
        if response.vectors.len() != texts.len() {
            return Err(SimilarityError::CountMismatch {
                sent: texts.len(),
                received: response.vectors.len(),
            });
        }
        let vectors = response
            .vectors
            .into_iter()
            .map(|v| EmbeddingVector::new(v).map_err(|e| SimilarityError::Malformed(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(SimilarityError::DimensionMismatch {
                    left: first.dim(),
                    right: bad.dim(),
                });
            }
        }
        Ok(vectors)
    }
}

impl EmbeddingSource for RemoteEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, SimilarityError> {
        self.remote_embed(texts)
    }
}

/// Cosine similarity over vectors from an [`EmbeddingSource`].
pub struct EmbeddingSimilarity<S> {
    source: S,
    mode: CosineMode,
}

impl<S: EmbeddingSource> EmbeddingSimilarity<S> {
    pub fn new(source: S) -> Self {
        EmbeddingSimilarity {
            source,
            mode: CosineMode::Clamp,
        }
    }

    pub fn with_mode(mut self, mode: CosineMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: EmbeddingSource> SimilarityProvider for EmbeddingSimilarity<S> {
    fn kind(&self) -> ProviderKind {
        self.source.kind()
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        let vs = self.source.embed(&[a, b])?;
        if a == b {
            return Ok(1.0);
        }
        cosine_with(&vs[0], &vs[1], self.mode)
    }

    fn prepare(&self, texts: &[&str]) -> Result<(), SimilarityError> {
        if self.source.kind() == ProviderKind::Remote {
            self.source.embed(texts)?;
        }
        Ok(())
    }
}

/// Uses `primary` and answers with lexical similarity whenever the primary
/// provider fails.
pub struct LexicalFallback<P> {
    primary: P,
}

impl<P: SimilarityProvider> LexicalFallback<P> {
    pub fn new(primary: P) -> Self {
        LexicalFallback { primary }
    }
}

impl<P: SimilarityProvider> SimilarityProvider for LexicalFallback<P> {
    fn kind(&self) -> ProviderKind {
        self.primary.kind()
    }

    fn similarity(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        Ok(self
            .primary
            .similarity(a, b)
            .unwrap_or_else(|_| lexical_similarity(a, b)))
    }

    fn prepare(&self, texts: &[&str]) -> Result<(), SimilarityError> {
        let _ = self.primary.prepare(texts);
        Ok(())
    }
}
