use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("no snapshots")]
    NoSnapshots,
    #[error("degenerate reference")]
    DegenerateReference,
    #[error("retraction singularity")]
    RetractionSingularity,
    #[error("degenerate direction")]
    DegenerateDirection,
    /// A Hermitian system was not positive definite or exceeded the
    /// condition-number guard.
    #[error("rank-deficient or ill-conditioned Hermitian system")]
    Singular,
    #[error("rank-deficient combiner system")]
    RankDeficientCombiner,
    #[error("null precoder")]
    NullPrecoder,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at layer {layer}, epoch {epoch}")]
    Diverged { layer: usize, epoch: usize },
    #[error("empty dataset")]
    EmptyDataset,
}

pub type Result<T> = core::result::Result<T, Error>;
