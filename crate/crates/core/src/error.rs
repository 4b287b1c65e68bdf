use alloc::boxed::Box;
use alloc::string::String;

use crate::centralpath::SolveOutput;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("sketch dimensions must be positive (rows={rows}, cols={cols})")]
    EmptySketch { rows: usize, cols: usize },

    #[error("SRHT cannot sample {rows} rows without replacement from padded dimension {padded}")]
    SketchRowsExceedPadded { rows: usize, padded: usize },

    #[error("identity sketch requires rows == cols (rows={rows}, cols={cols})")]
    IdentityShape { rows: usize, cols: usize },

    #[error("sketch spec kind mismatch: expected {expected}")]
    SketchKindMismatch { expected: &'static str },

    #[error("invalid sketch spec encoding: {0}")]
    SketchSpecEncoding(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point is not strictly interior to the barrier domain (block {block})")]
    DomainViolation { block: usize },

    #[error("barrier Hessian is singular")]
    SingularHessian,

    #[error("invalid barrier parameters: {0}")]
    InvalidBarrier(&'static str),

    #[error("A W A^T is singular: constraint matrix is rank deficient")]
    RankDeficient,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),

    #[error("sketched Gram product R^T R B^-1 S^T S is singular")]
    SingularG,

    #[error("damping could not restore interiority within {halvings} halvings")]
    LineSearchFailed { halvings: u32 },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("initial point is not centered: dual norm {measured} exceeds {allowed}")]
    CenteringTooLoose { measured: f64, allowed: f64 },

    #[error("iteration cap reached before the termination rule was met")]
    IterationCapExceeded(Box<SolveOutput>),

    #[error("loss `{0}` has no registered epigraph barrier")]
    UnsupportedLoss(&'static str),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid hyper-parameters: {0}")]
    InvalidParams(&'static str),

    #[error("vertex enumeration limited to n <= {limit} (got n = {n})")]
    SizeTooLarge { n: usize, limit: usize },

    #[error("missing upload from client {client} in round {round}")]
    MissingUpload { client: u32, round: u32 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("malformed frame: {0}")]
    Frame(&'static str),
}
