//! Face image quality assessment.
//!
//! Quality labels come from how well a recognition backbone matches each
//! image against its subject's most standards-compliant image. A small
//! regression head learns to predict those labels from frozen backbone
//! features, and an evaluation stage checks that predicted quality orders
//! verification error rates.

pub mod compliance;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod evaluation;
pub mod groundtruth;
pub mod imaging;
pub mod pipeline;
pub mod qualitymodel;
pub mod remote;
pub mod serve;
pub mod synth;
pub mod textfmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Compliance(#[from] compliance::ComplianceError),
    #[error(transparent)]
    Embedding(#[from] embeddings::EmbeddingError),
    #[error(transparent)]
    Groundtruth(#[from] groundtruth::GroundtruthError),
    #[error(transparent)]
    Model(#[from] qualitymodel::ModelError),
    #[error(transparent)]
    Evaluation(#[from] evaluation::EvaluationError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit status: 2 bad input, 3 data or shape problems,
    /// 4 external service failures, 5 internal errors.
    pub fn exit_code(&self) -> i32 {
        use dataset::DatasetError as D;
        use embeddings::EmbeddingError as E;
        match self {
            Error::Config(_) => 2,
            Error::Dataset(D::MissingFile(_) | D::MalformedManifest { .. } | D::Io { .. }) => 2,
            Error::Dataset(_) => 3,
            Error::Compliance(_) => 3,
            Error::Embedding(E::BackendFailure(_)) => 4,
            Error::Embedding(_) => 3,
            Error::Groundtruth(_) => 3,
            Error::Model(qualitymodel::ModelError::Embedding(E::BackendFailure(_))) => 4,
            Error::Model(_) => 3,
            Error::Evaluation(evaluation::EvaluationError::ComparatorFailure(_)) => 4,
            Error::Evaluation(_) => 3,
            Error::Io(_) => 2,
            Error::Internal(_) => 5,
        }
    }
}
