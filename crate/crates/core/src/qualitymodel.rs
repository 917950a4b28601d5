//! The quality regression head: `F → 32 (ReLU) → 1 (linear)` trained with
//! squared error on precomputed, frozen backbone features.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::FaceTensor;
use crate::embeddings::{embed, EmbeddingBackend, EmbeddingError};
use crate::textfmt;

pub const HIDDEN: usize = 32;
pub const DEFAULT_FEATURE_DIM: usize = 2048;
pub const CHECKPOINT_MAGIC: &str = "FACEQHEAD v1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input feature at index {0}")]
    NonFiniteFeature(usize),
    #[error("empty training dataset")]
    EmptyDataset,
    #[error("label {value} at sample {index} outside [0,1]")]
    InvalidLabel { index: usize, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite training loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("corrupt checkpoint at line {line}: {reason}")]
    CorruptCheckpoint { line: usize, reason: String },
    #[error("backend mismatch: checkpoint trained on {expected:?}, got {found:?}")]
    BackendMismatch { expected: String, found: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Head weights. `w1` is `F×32` row-major: `w1[i*32 + j]` connects feature
/// `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParameters {
    pub feature_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradients share the parameter layout.
pub type HeadGradients = HeadParameters;

impl HeadParameters {
    pub fn zeros(feature_dim: usize) -> Self {
        Self { feature_dim, w1: vec![0.0; feature_dim * HIDDEN], b1: vec![0.0; HIDDEN], w2: vec![0.0; HIDDEN], b2: 0.0 }
    }

    /// `W1, w2 ~ U[−1/√fan_in, 1/√fan_in]`, biases zero. `W1` is drawn first,
    /// row-major, then `w2`.
    pub fn init(feature_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(feature_dim);
        let a1 = 1.0 / (feature_dim as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..=a1));
        let a2 = 1.0 / (HIDDEN as f64).sqrt();
        p.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..=a2));
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flat view in `W1, b1, w2, b2` order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(feature_dim: usize, flat: &[f64]) -> Self {
        let n1 = feature_dim * HIDDEN;
        assert_eq!(flat.len(), n1 + 2 * HIDDEN + 1, "flat parameter length");
        Self {
            feature_dim,
            w1: flat[..n1].to_vec(),
            b1: flat[n1..n1 + HIDDEN].to_vec(),
            w2: flat[n1 + HIDDEN..n1 + 2 * HIDDEN].to_vec(),
            b2: flat[n1 + 2 * HIDDEN],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, features: &[f64]) -> Result<(), ModelError> {
        if features.len() != self.feature_dim {
            return Err(ModelError::DimensionMismatch { expected: self.feature_dim, found: features.len() });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature(i));
        }
        Ok(())
    }

    fn pre_activations(&self, features: &[f64]) -> [f64; HIDDEN] {
        let mut pre = [0f64; HIDDEN];
        pre.copy_from_slice(&self.b1);
        for (x, row) in features.iter().zip(self.w1.chunks_exact(HIDDEN)) {
            if *x == 0.0 {
                continue;
            }
            for (p, w) in pre.iter_mut().zip(row) {
                *p += x * w;
            }
        }
        pre
    }

    fn output(&self, pre: &[f64; HIDDEN]) -> f64 {
        pre.iter().zip(&self.w2).map(|(p, w)| p.max(0.0) * w).sum::<f64>() + self.b2
    }

    fn scale_add(&mut self, other: &HeadParameters, factor: f64) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += factor * b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += factor * b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += factor * b;
        }
        self.b2 += factor * other.b2;
    }
}

/// `y = w2ᵀ·max(0, W1ᵀx + b1) + b2`, unclamped.
pub fn head_forward(features: &[f64], params: &HeadParameters) -> Result<f64, ModelError> {
    params.check_input(features)?;
    Ok(params.output(&params.pre_activations(features)))
}

/// Adds `∂(y − target)²/∂θ` into `grad`; returns the squared error. ReLU
/// passes gradient only for strictly positive pre-activations.
fn accumulate_gradients(features: &[f64], target: f64, params: &HeadParameters, grad: &mut HeadGradients) -> f64 {
    let pre = params.pre_activations(features);
    let err = params.output(&pre) - target;
    let dy = 2.0 * err;
    grad.b2 += dy;
    let mut dpre = [0f64; HIDDEN];
    for j in 0..HIDDEN {
        if pre[j] > 0.0 {
            grad.w2[j] += dy * pre[j];
            dpre[j] = dy * params.w2[j];
            grad.b1[j] += dpre[j];
        }
    }
    for (x, row) in features.iter().zip(grad.w1.chunks_exact_mut(HIDDEN)) {
        if *x == 0.0 {
            continue;
        }
        for (g, d) in row.iter_mut().zip(&dpre) {
            *g += x * d;
        }
    }
    err * err
}

pub fn head_gradients(features: &[f64], target: f64, params: &HeadParameters) -> Result<HeadGradients, ModelError> {
    params.check_input(features)?;
    let mut grad = HeadParameters::zeros(params.feature_dim);
    accumulate_gradients(features, target, params, &mut grad);
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 50, batch_size: 32, seed: 0 }
    }
}

impl TrainConfig {
    pub fn canonical(&self) -> String {
        format!(
            "learning_rate={} epochs={} batch_size={} seed={} loss=mse optimizer=sgd",
            textfmt::f64_to_string(self.learning_rate),
            self.epochs,
            self.batch_size,
            self.seed
        )
    }

    /// First 16 hex digits of SHA-256 over [`canonical`](Self::canonical).
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(format!("learning_rate {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: HeadParameters,
    /// Mean per-sample loss of each epoch, measured before each batch update.
    pub loss_history: Vec<f64>,
}

/// Per-epoch visiting orders: one ChaCha8 stream seeded by `seed`, each
/// epoch shuffling a fresh `0..n`.
pub fn epoch_orders(n: usize, epochs: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// Mini-batch gradient descent on mean squared error.
pub fn train_head(dataset: &[TrainingSample], config: &TrainConfig, init_seed: u64) -> Result<TrainOutcome, ModelError> {
    let orders = epoch_orders(dataset.len(), config.epochs, config.seed);
    let feature_dim = dataset.first().map(|s| s.features.len()).ok_or(ModelError::EmptyDataset)?;
    train_head_from(dataset, config, HeadParameters::init(feature_dim, init_seed), &orders)
}

/// Training with explicit initial parameters and visiting orders. The
/// trajectory depends only on the realized sample sequence.
pub fn train_head_from(
    dataset: &[TrainingSample],
    config: &TrainConfig,
    init: HeadParameters,
    orders: &[Vec<usize>],
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for (index, s) in dataset.iter().enumerate() {
        init.check_input(&s.features)?;
        if !(0.0..=1.0).contains(&s.target) {
            return Err(ModelError::InvalidLabel { index, value: s.target });
        }
    }
    let mut params = init;
    let mut grad = HeadParameters::zeros(params.feature_dim);
    let mut loss_history = Vec::with_capacity(orders.len());
    for (epoch, order) in orders.iter().enumerate() {
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.w1.fill(0.0);
            grad.b1.fill(0.0);
            grad.w2.fill(0.0);
            grad.b2 = 0.0;
            for &i in batch {
                let s = &dataset[i];
                epoch_loss += accumulate_gradients(&s.features, s.target, &params, &mut grad);
            }
            params.scale_add(&grad, -config.learning_rate / batch.len() as f64);
        }
        let mean = epoch_loss / order.len().max(1) as f64;
        if !mean.is_finite() || !params.is_finite() {
            log::error!("training diverged in epoch {epoch}: mean loss {mean}");
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean}");
        loss_history.push(mean);
    }
    Ok(TrainOutcome { params, loss_history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: HeadParameters,
    pub backend_id: String,
    pub config_digest: String,
    pub final_loss: f64,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::with_capacity(p.parameter_count() * 22 + 256);
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "backend_id={} F={} loss={} config={}\n",
            self.backend_id,
            p.feature_dim,
            textfmt::f64_to_string(self.final_loss),
            self.config_digest
        ));
        out.push_str("[W1]\n");
        for row in p.w1.chunks_exact(HIDDEN) {
            out.push_str(&textfmt::join_f64(row, "\t"));
            out.push('\n');
        }
        for (name, values) in [("[b1]", &p.b1[..]), ("[w2]", &p.w2[..]), ("[b2]", std::slice::from_ref(&p.b2))] {
            out.push_str(name);
            out.push('\n');
            out.push_str(&textfmt::join_f64(values, "\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let corrupt = |line: usize, reason: String| ModelError::CorruptCheckpoint { line, reason };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&CHECKPOINT_MAGIC) {
            return Err(corrupt(1, "bad magic header".into()));
        }
        let meta = lines.get(1).ok_or_else(|| corrupt(2, "missing metadata".into()))?;
        let fields = textfmt::parse_header_fields(meta);
        let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let backend_id = get("backend_id").ok_or_else(|| corrupt(2, "missing backend_id".into()))?.to_string();
        let feature_dim: usize = get("F")
            .and_then(|v| v.parse().ok())
            .filter(|f| *f > 0)
            .ok_or_else(|| corrupt(2, "bad F".into()))?;
        let final_loss = get("loss").and_then(textfmt::parse_f64).ok_or_else(|| corrupt(2, "bad loss".into()))?;
        let config_digest = get("config").unwrap_or_default().to_string();

        let mut cursor = 2usize;
        let mut section = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>, ModelError> {
            if lines.get(cursor) != Some(&name) {
                return Err(corrupt(cursor + 1, format!("expected section {name}")));
            }
            cursor += 1;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.get(cursor).ok_or_else(|| corrupt(cursor + 1, format!("truncated {name}")))?;
                let row = line
                    .split('\t')
                    .map(textfmt::parse_f64)
                    .collect::<Option<Vec<f64>>>()
                    .filter(|r| r.len() == cols)
                    .ok_or_else(|| corrupt(cursor + 1, format!("bad row in {name}")))?;
                values.extend(row);
                cursor += 1;
            }
            Ok(values)
        };
        let w1 = section("[W1]", feature_dim, HIDDEN)?;
        let b1 = section("[b1]", 1, HIDDEN)?;
        let w2 = section("[w2]", 1, HIDDEN)?;
        let b2 = section("[b2]", 1, 1)?[0];
        if lines[cursor..].iter().any(|l| !l.trim().is_empty()) {
            return Err(corrupt(cursor + 1, "trailing content".into()));
        }
        Ok(Self { params: HeadParameters { feature_dim, w1, b1, w2, b2 }, backend_id, config_digest, final_loss })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    Ok(std::fs::write(path, checkpoint.to_text())?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    Checkpoint::parse(&std::fs::read_to_string(path)?)
}

pub fn clamp_quality(raw: f64) -> f64 {
    raw.clamp(0.0, 1.0)
}

/// Embeds with the feature backbone, runs the head, clamps into `[0,1]`.
pub fn predict_quality(
    face: &FaceTensor,
    feature_backend: &dyn EmbeddingBackend,
    checkpoint: &Checkpoint,
) -> Result<f64, ModelError> {
    if feature_backend.backend_id() != checkpoint.backend_id {
        return Err(ModelError::BackendMismatch {
            expected: checkpoint.backend_id.clone(),
            found: feature_backend.backend_id().to_string(),
        });
    }
    let features = embed("", face, feature_backend)?;
    Ok(clamp_quality(head_forward(&features.vector, &checkpoint.params)?))
}

/// A loaded checkpoint bound to its feature backbone.
#[derive(Clone)]
pub struct QualityScorer {
    checkpoint: Arc<Checkpoint>,
    backend: Arc<dyn EmbeddingBackend>,
}

impl QualityScorer {
    pub fn new(checkpoint: Checkpoint, backend: Arc<dyn EmbeddingBackend>) -> Result<Self, ModelError> {
        if backend.backend_id() != checkpoint.backend_id {
            return Err(ModelError::BackendMismatch {
                expected: checkpoint.backend_id.clone(),
                found: backend.backend_id().to_string(),
            });
        }
        if backend.dimension() != checkpoint.params.feature_dim {
            return Err(ModelError::DimensionMismatch { expected: checkpoint.params.feature_dim, found: backend.dimension() });
        }
        Ok(Self { checkpoint: Arc::new(checkpoint), backend })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn score(&self, face: &FaceTensor) -> Result<f64, ModelError> {
        predict_quality(face, self.backend.as_ref(), &self.checkpoint)
    }
}
