use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum QvnError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operand kinds do not match: {0}")]
    KindMismatch(String),
    #[error("partial trace needs at least one kept subsystem")]
    EmptyKeep,
    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("channel is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),
    #[error("invalid projective measurement: {0}")]
    InvalidPvm(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("program slot `{0}` has already been consumed")]
    ProgramConsumed(String),
    #[error("a program labelled `{0}` is already stored")]
    DuplicateLabel(String),
    #[error("no program labelled `{0}`")]
    UnknownLabel(String),
    #[error("{0}: no white-box description available; use post-selected composition instead")]
    NoWhitebox(String),
    #[error("slot `{0}` has no white-box description and no download source")]
    RefreshUnavailable(String),
    #[error("program `{0}` has no classical description and cannot be cloned")]
    CloneForbidden(String),
    #[error("flag is not an eigenpair of the program (residual {residual:.3e})")]
    BadFlag { residual: f64 },
    #[error("program `{0}` carries no flag")]
    MissingFlag(String),
    #[error("ebit pool is empty")]
    EbitPoolEmpty,
    #[error("switch gadget has already been selected")]
    AlreadySelected,
    #[error("verification needs {required} samples, got {provided}")]
    InsufficientSamples { required: usize, provided: usize },
    #[error("protocol aborted: {0}")]
    Abort(String),
    #[error("inconsistent probability {0} recovered")]
    InconsistentProbability(f64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QvnError>;
