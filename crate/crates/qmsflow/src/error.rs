//! Error type shared by every module of the crate.

use thiserror::Error;

/// Unified error enum. Variants are grouped by the layer that raises them;
/// all carry enough context (sizes, residuals, names) to diagnose a failure
/// from a log line alone.
#[derive(Debug, Error)]
pub enum Error {
    // ---- matrix kernel ----
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: symmetry residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NonHermitian { residual: f64, tol: f64 },
    #[error("matrix is not strictly positive: smallest eigenvalue {min_eig:.3e}")]
    NotPositive { min_eig: f64 },
    #[error("logarithmic mean requires positive arguments, got ({a:.3e}, {b:.3e})")]
    NonPositiveInput { a: f64, b: f64 },

    // ---- tower models ----
    #[error("size too large for {what}: n = {n}, maximum {max}")]
    SizeTooLarge { what: &'static str, n: usize, max: usize },
    #[error("elements belong to different inclusion models ({left} vs {right})")]
    ModelMismatch { left: String, right: String },
    #[error("element is not in the relative commutant: projection residual {residual:.3e}")]
    NotInRelativeCommutant { residual: f64 },
    #[error("conditional expectation onto {target} is not representable on this carrier")]
    UnsupportedTarget { target: String },

    // ---- semigroup construction / verification ----
    #[error("strong part is not positive semidefinite: smallest eigenvalue {min_eig:.3e}")]
    NegativeL0 { min_eig: f64 },
    #[error("precondition violated: {identity} has residual {residual:.3e}")]
    PreconditionViolated { identity: String, residual: f64 },
    #[error("invalid weight parameter mu = {mu}")]
    InvalidMu { mu: f64 },
    #[error("jump-operator constraint violated: {constraint} residual {residual:.3e}")]
    ConstraintViolated { constraint: String, residual: f64 },
    #[error("negative time t = {t}")]
    NegativeTime { t: f64 },
    #[error("semigroup is not relatively ergodic: {reason}")]
    NotErgodic { reason: String },

    // ---- block decomposition / frame ----
    #[error("algebra closure did not converge: dimension still rising after {passes} passes")]
    NoConvergence { passes: usize },
    #[error("block decomposition failed: {reason} (residual {residual:.3e})")]
    DecompositionFailed { reason: String, residual: f64 },
    #[error("ranges of the strong part and its contragredient differ: residual {residual:.3e}")]
    RangeMismatch { residual: f64 },
    #[error("modular weight is not diagonalized within the algebra: off-diagonal residual {residual:.3e}")]
    NonDiagonalizable { residual: f64 },

    // ---- flow / certification ----
    #[error("linear system for {what} is inconsistent: residual {residual:.3e}")]
    InconsistentSystem { what: String, residual: f64 },
    #[error("flow-form constant has not been calibrated for this model class")]
    NotCalibrated,
    #[error("calibration failed: best convention residual {residual:.3e} exceeds {tol:.3e}")]
    CalibrationFailed { residual: f64, tol: f64 },
    #[error("velocity is outside the admissible range: solve residual {residual:.3e}")]
    OutOfRange { residual: f64 },
    #[error("positivity lost during integration at t = {t:.6} after {halvings} step halvings")]
    PositivityLost { t: f64, halvings: usize },
    #[error("quadrature tail could not be bounded: {reason}")]
    TailNotBounded { reason: String },
    #[error("no constant-coefficient commutation relation found: residual {residual:.3e}")]
    NoLinearRelation { residual: f64 },

    // ---- two-generator Clifford model ----
    #[error("invalid model parameters: {reason}")]
    InvalidParameters { reason: String },
    #[error("sandwich convention rejected: best residual {residual:.3e}")]
    ConventionRejected { residual: f64 },

    // ---- front-end ----
    #[error("invalid configuration: {reason}")]
    ConfigInvalid { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
