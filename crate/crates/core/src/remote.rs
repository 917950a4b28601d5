//! HTTP adapters for external embedding and comparison services.
//!
//! * Embedding: `POST <url>` with the aligned face as `image/png`, answered
//!   by `{"vector": [..]}`.
//! * Comparison: `POST <url>` with a `multipart/form-data` body holding the
//!   parts `probe` and `reference` (both PNG), answered by `{"score": s}`.
//!   The URL and an optional bearer key come from `FACEQA_COMPARATOR_URL`
//!   and `FACEQA_COMPARATOR_KEY`.

use std::time::Duration;

use serde::Deserialize;

use crate::dataset::FaceTensor;
use crate::embeddings::{EmbeddingBackend, EmbeddingError};
use crate::evaluation::{Comparator, EvaluationError};

pub const COMPARATOR_URL_VAR: &str = "FACEQA_COMPARATOR_URL";
pub const COMPARATOR_KEY_VAR: &str = "FACEQA_COMPARATOR_KEY";
const MULTIPART_BOUNDARY: &str = "faceqa-7d1c5e0b9a4f";

fn agent(timeout: Duration) -> ureq::Agent {
    let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
    ureq::Agent::new_with_config(config)
}

#[derive(Deserialize)]
struct VectorReply {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

pub struct HttpEmbeddingBackend {
    id: String,
    url: String,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbeddingBackend {
    pub fn new(id: impl Into<String>, url: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
        Self { id: id.into(), url: url.into(), dimension, agent: agent(timeout) }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_vector(&self, face: &FaceTensor) -> Result<Vec<f64>, EmbeddingError> {
        let fail = |e: ureq::Error| EmbeddingError::BackendFailure(format!("{}: {e}", self.url));
        let reply: VectorReply = self
            .agent
            .post(&self.url)
            .header("Content-Type", "image/png")
            .send(&face.image().encode_png()[..])
            .map_err(fail)?
            .into_body()
            .read_json()
            .map_err(fail)?;
        Ok(reply.vector)
    }
}

pub struct HttpComparator {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpComparator {
    pub fn new(url: impl Into<String>, key: Option<String>, timeout: Duration) -> Self {
        Self { url: url.into(), key, agent: agent(timeout) }
    }

    /// `None` when `FACEQA_COMPARATOR_URL` is unset or empty.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(COMPARATOR_URL_VAR).ok().filter(|u| !u.is_empty())?;
        let key = std::env::var(COMPARATOR_KEY_VAR).ok().filter(|k| !k.is_empty());
        Some(Self::new(url, key, timeout))
    }
}

pub fn multipart_body(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!(
                "--{MULTIPART_BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{MULTIPART_BOUNDARY}--\r\n").as_bytes());
    body
}

impl Comparator for HttpComparator {
    fn compare_faces(&self, a: &FaceTensor, b: &FaceTensor) -> Result<f64, EvaluationError> {
        let fail = |e: ureq::Error| EvaluationError::ComparatorFailure(format!("{}: {e}", self.url));
        let body = multipart_body(&[("probe", &a.image().encode_png()), ("reference", &b.image().encode_png())]);
        let mut request = self
            .agent
            .post(&self.url)
            .header("Content-Type", format!("multipart/form-data; boundary={MULTIPART_BOUNDARY}"));
        if let Some(key) = &self.key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let reply: ScoreReply = request.send(&body[..]).map_err(fail)?.into_body().read_json().map_err(fail)?;
        Ok(reply.score)
    }
}
