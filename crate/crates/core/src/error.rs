//! Error types shared by the core library.

use thiserror::Error;

/// Errors produced by core operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's preconditions.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A binary tensor file is malformed. Carries the byte offset at which
    /// decoding failed.
    #[error("format error at byte offset {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// A class required by class-wise aggregation has no samples.
    #[error("missing class: class {0} has no samples")]
    MissingClass(usize),

    /// A summed class embedding is the zero vector, so it cannot be normalized.
    #[error("degenerate embedding: class {0} sums to the zero vector")]
    DegenerateEmbedding(usize),

    /// A layer's parameter norm is zero, so the normalized change is undefined.
    #[error("degenerate layer: layer {0} has zero parameter norm")]
    DegenerateLayer(usize),

    /// Correlation is undefined, e.g. because one input series is constant.
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// A loss or parameter became non-finite; the run is aborted.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A pipeline stage failed; the stage name identifies where.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
