//! Pluggable embedding backbones and the on-disk embedding cache.
//!
//! Two independent backend slots exist in the pipeline: the groundtruth
//! backbone (identity embeddings, 128-d by default) and the feature backbone
//! (penultimate-layer features for the quality head, 2048-d by default).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::FaceTensor;
use crate::imaging::luma;
use crate::textfmt;

pub const GRID: usize = 8;
/// 64 luma block means + 3 channel means + 3 channel standard deviations.
pub const STATISTIC_COUNT: usize = GRID * GRID + 6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("backend mismatch: expected {expected:?}, found {found:?}")]
    BackendMismatch { expected: String, found: String },
    #[error("corrupt cache at line {line}: {reason}")]
    CorruptCache { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-index failures from [`embed_batch`].
#[derive(Debug, Error)]
pub struct BatchEmbedError {
    pub failures: Vec<(usize, EmbeddingError)>,
}

impl fmt::Display for BatchEmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} embedding(s) failed:", self.failures.len())?;
        for (i, e) in &self.failures {
            write!(f, " [{i}] {e};")?;
        }
        Ok(())
    }
}

impl BatchEmbedError {
    pub fn indices(&self) -> Vec<usize> {
        self.failures.iter().map(|(i, _)| *i).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub image_id: String,
    pub vector: Vec<f64>,
    pub backend_id: String,
}

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.vector.len()
    }
}

pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Must be deterministic in `face`.
    fn embed_vector(&self, face: &FaceTensor) -> Result<Vec<f64>, EmbeddingError>;
}

/// Embeds one face, checking the dimension and finiteness contract.
pub fn embed(image_id: &str, face: &FaceTensor, backend: &dyn EmbeddingBackend) -> Result<Embedding, EmbeddingError> {
    let vector = backend.embed_vector(face)?;
    if vector.len() != backend.dimension() {
        return Err(EmbeddingError::DimensionMismatch { expected: backend.dimension(), found: vector.len() });
    }
    if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
        return Err(EmbeddingError::BackendFailure(format!("non-finite component at index {i}")));
    }
    Ok(Embedding { image_id: image_id.to_string(), vector, backend_id: backend.backend_id().to_string() })
}

/// Order-preserving batch embed; all per-item failures are collected.
pub fn embed_batch(
    faces: &[(&str, &FaceTensor)],
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<Embedding>, BatchEmbedError> {
    let results: Vec<_> = faces.par_iter().map(|(id, face)| embed(id, face, backend)).collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(BatchEmbedError { failures })
    }
}

/// Deterministic desk-scale backbone: image statistics through a seeded
/// random projection, then L2 normalization.
///
/// The projection has one extra bias column so that an all-zero statistic
/// vector still maps to a unit vector.
#[derive(Debug, Clone)]
pub struct TestBackend {
    id: String,
    dimension: usize,
    seed: u64,
    /// `dimension × (STATISTIC_COUNT + 1)`, row-major; last column is the bias.
    projection: Vec<f64>,
}

impl TestBackend {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dimension * (STATISTIC_COUNT + 1)).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self { id: format!("test-d{dimension}-s{seed}"), dimension, seed, projection }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Applies the projection and normalization to a statistic vector.
    pub fn project(&self, stats: &[f64; STATISTIC_COUNT]) -> Vec<f64> {
        let cols = STATISTIC_COUNT + 1;
        let mut out: Vec<f64> = self
            .projection
            .chunks_exact(cols)
            .map(|row| row[..STATISTIC_COUNT].iter().zip(stats).map(|(w, s)| w * s).sum::<f64>() + row[STATISTIC_COUNT])
            .collect();
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

pub fn make_test_backend(dimension: usize, seed: u64) -> TestBackend {
    TestBackend::new(dimension, seed)
}

/// Luma block means over an 8×8 grid (row-major), then R/G/B means, then
/// R/G/B population standard deviations.
pub fn image_statistics(face: &FaceTensor) -> [f64; STATISTIC_COUNT] {
    let img = face.image();
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    let mut block_sum = [0f64; GRID * GRID];
    let mut block_n = [0usize; GRID * GRID];
    let mut ch_sum = [0f64; 3];
    let mut ch_sq = [0f64; 3];
    for y in 0..h {
        let by = y * GRID / h;
        for x in 0..w {
            let bx = x * GRID / w;
            let i = (y * w + x) * 3;
            let (r, g, b) = (data[i] as f64, data[i + 1] as f64, data[i + 2] as f64);
            block_sum[by * GRID + bx] += luma(r, g, b);
            block_n[by * GRID + bx] += 1;
            for (c, v) in [r, g, b].into_iter().enumerate() {
                ch_sum[c] += v;
                ch_sq[c] += v * v;
            }
        }
    }
    let n = (w * h) as f64;
    let mut stats = [0f64; STATISTIC_COUNT];
    for k in 0..GRID * GRID {
        stats[k] = block_sum[k] / block_n[k].max(1) as f64;
    }
    for c in 0..3 {
        let mean = ch_sum[c] / n;
        stats[GRID * GRID + c] = mean;
        stats[GRID * GRID + 3 + c] = (ch_sq[c] / n - mean * mean).max(0.0).sqrt();
    }
    stats
}

impl EmbeddingBackend for TestBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_vector(&self, face: &FaceTensor) -> Result<Vec<f64>, EmbeddingError> {
        Ok(self.project(&image_statistics(face)))
    }
}

/// Embeddings of one backend keyed by `image_id`.
///
/// Writers must be serialized by the caller; concurrent reads are fine.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    backend_id: String,
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new(backend_id: impl Into<String>, dimension: usize) -> Self {
        let backend_id = backend_id.into();
        assert!(!backend_id.is_empty() && !backend_id.contains(char::is_whitespace), "invalid backend id {backend_id:?}");
        Self { backend_id, dimension, entries: BTreeMap::new() }
    }

    pub fn for_backend(backend: &dyn EmbeddingBackend) -> Self {
        Self::new(backend.backend_id(), backend.dimension())
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.entries.contains_key(image_id)
    }

    pub fn get(&self, image_id: &str) -> Option<Embedding> {
        self.entries.get(image_id).map(|v| Embedding {
            image_id: image_id.to_string(),
            vector: v.clone(),
            backend_id: self.backend_id.clone(),
        })
    }

    pub fn vector(&self, image_id: &str) -> Option<&[f64]> {
        self.entries.get(image_id).map(Vec::as_slice)
    }

    pub fn store(&mut self, embedding: Embedding) -> Result<(), EmbeddingError> {
        if embedding.backend_id != self.backend_id {
            return Err(EmbeddingError::BackendMismatch { expected: self.backend_id.clone(), found: embedding.backend_id });
        }
        if embedding.vector.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch { expected: self.dimension, found: embedding.vector.len() });
        }
        self.entries.insert(embedding.image_id, embedding.vector);
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# backend_id={} dimension={}\n", self.backend_id, self.dimension);
        for (id, v) in &self.entries {
            out.push_str(id);
            out.push('\t');
            out.push_str(&textfmt::join_f64(v, ","));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        Ok(std::fs::write(path, self.to_tsv())?)
    }

    pub fn parse(text: &str, backend_id: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let fields = header
            .strip_prefix("# ")
            .map(textfmt::parse_header_fields)
            .ok_or_else(|| EmbeddingError::CorruptCache { line: 1, reason: "missing header".into() })?;
        let lookup = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let found = lookup("backend_id")
            .ok_or_else(|| EmbeddingError::CorruptCache { line: 1, reason: "header lacks backend_id".into() })?;
        if found != backend_id {
            return Err(EmbeddingError::BackendMismatch { expected: backend_id.to_string(), found: found.to_string() });
        }
        let dimension: usize = lookup("dimension")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| EmbeddingError::CorruptCache { line: 1, reason: "header lacks dimension".into() })?;
        let mut cache = Self::new(backend_id, dimension);
        let line_count = text.lines().count();
        for (idx, raw) in lines {
            let line = idx + 1;
            if raw.is_empty() {
                continue;
            }
            let corrupt = |reason: String| EmbeddingError::CorruptCache { line, reason };
            let (id, values) = raw.split_once('\t').ok_or_else(|| corrupt("missing tab".into()))?;
            let vector = values
                .split(',')
                .map(|s| textfmt::parse_f64(s).ok_or_else(|| corrupt(format!("bad value {s:?}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            if vector.len() != dimension {
                return Err(corrupt(format!("expected {dimension} values, found {}", vector.len())));
            }
            if line == line_count && !text.ends_with('\n') {
                return Err(corrupt("truncated row".into()));
            }
            cache.entries.insert(id.to_string(), vector);
        }
        Ok(cache)
    }
}

pub fn cache_store(cache: &mut EmbeddingCache, embedding: Embedding) -> Result<(), EmbeddingError> {
    cache.store(embedding)
}

pub fn cache_load(path: &Path, backend_id: &str) -> Result<EmbeddingCache, EmbeddingError> {
    let text = std::fs::read_to_string(path)?;
    EmbeddingCache::parse(&text, backend_id)
}
