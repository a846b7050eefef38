//! Error taxonomy for the whole crate.
//!
//! Variants are grouped by how a caller should react: `Validation`-class errors
//! mean the input never made sense, numerical-class errors mean a computation
//! gave up, and evidence-class errors mean a classification was attempted
//! without the data it needs.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GftError {
    // -- chart / metric --
    #[error("metric is not positive definite at {point:?}: {detail}")]
    NonPositiveDefinite { point: Vec<f64>, detail: String },

    #[error("point {point:?} lies outside the chart (axis {axis})")]
    OutOfChart { point: Vec<f64>, axis: usize },

    #[error("axis {axis} has {n} nodes; at least {min} required")]
    ResolutionTooLow { axis: usize, n: usize, min: usize },

    #[error("metric must be diagonal for this operation")]
    NonDiagonalMetric,

    // -- spectral --
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("cluster boundaries are ambiguous near lambda = {lambda}: gap {gap:.3e} is within 2x of cluster_tol {tol:.3e}")]
    ClusterAmbiguity { lambda: f64, gap: f64, tol: f64 },

    #[error("coefficient labels do not match the decomposition: {0}")]
    LabelMismatch(String),

    #[error("matrix is not unitary: deviation {0:.3e}")]
    NotUnitary(f64),

    #[error("operation requires the full spectrum ({have} of {need} pairs computed)")]
    RequiresFullSpectrum { have: usize, need: usize },

    // -- symmetry --
    #[error("operators live on different grids")]
    GridMismatch,

    #[error("operator {op} leaks out of the eigenvalue-{lambda} fiber: |(I-P)OP| = {leak:.3e} > {tol:.3e}")]
    NonInvariantFiber { op: String, lambda: f64, leak: f64, tol: f64 },

    #[error("mapping is not a catalog isometry: {0}")]
    NotCatalogIsometry(String),

    // -- killing / separability --
    #[error("rank {0} tensors are not supported (rank must be 1 or 2)")]
    UnsupportedRank(usize),

    #[error("operation defined for dimension {expected}, chart has dimension {got}")]
    DimensionUnsupported { expected: usize, got: usize },

    #[error("metric is not separable: {0}")]
    NotSeparable(String),

    // -- special functions --
    #[error("invalid spherical-harmonic index (ell = {ell}, m = {m}): |m| must not exceed ell")]
    IndexInvalid { ell: u32, m: i32 },

    // -- classification --
    #[error("classification needs Frobenius evidence for rank-2 member {0}")]
    MissingFrobeniusEvidence(String),

    #[error("manifold is compact yet axis '{0}' is tagged continuum")]
    InconsistentCompactness(String),

    // -- input / plumbing --
    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GftError>;

impl GftError {
    /// Process exit code the CLI maps this error to: 2 for invalid input,
    /// 3 for numerical failures, 4 for missing classification evidence.
    pub fn exit_code(&self) -> i32 {
        use GftError::*;
        match self {
            NonPositiveDefinite { .. } | OutOfChart { .. } | ResolutionTooLow { .. }
            | NonDiagonalMetric | LabelMismatch(_) | GridMismatch
            | NotCatalogIsometry(_) | UnsupportedRank(_) | DimensionUnsupported { .. }
            | NotSeparable(_) | Manifest(_) | Expr(_) | Io(_) | RequiresFullSpectrum { .. }
            | IndexInvalid { .. } => 2,
            ConvergenceFailure(_) | ClusterAmbiguity { .. } | NotUnitary(_)
            | NonInvariantFiber { .. } => 3,
            MissingFrobeniusEvidence(_) | InconsistentCompactness(_) => 4,
        }
    }
}
