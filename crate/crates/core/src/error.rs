//! Error type shared by all numerical operations.

use thiserror::Error;

/// Failure modes of the numerical operations.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A trajectory left the state domain Ω.
    #[error("trajectory left the state domain at t = {exit_time}")]
    DomainExit { exit_time: f64 },

    /// The adaptive integrator could not reach the local error target.
    #[error("step size underflow at t = {t} (step {step:e})")]
    StepFailure { t: f64, step: f64 },

    /// Even the factored propagator exceeds representable magnitude.
    #[error("propagator overflow in window [{window_start}, {window_end}]")]
    Overflow { window_start: f64, window_end: f64 },

    /// No acceptable spectral gap: numerically non-hyperbolic at this horizon.
    #[error("no spectral gap at lambda = {lambda} (best ratio {best_gap:.3e} <= threshold {threshold:.3e})")]
    NoGap {
        lambda: f64,
        best_gap: f64,
        threshold: f64,
    },

    /// Fitted decay rate is non-positive; no dichotomy estimate at this horizon.
    #[error("fitted decay rate {alpha} is not positive")]
    NonDecay { alpha: f64 },

    /// Subspaces at consecutive parameters are too far apart to align.
    #[error("principal angle {angle:.3} rad exceeds alignment cap {cap:.3} rad")]
    AngleTooLarge { angle: f64, cap: f64 },

    /// Projection onto the new subspace lost rank during alignment.
    #[error("rank collapse while aligning a basis (column {column})")]
    RankCollapse { column: usize },

    /// Plus and minus ranks are inconsistent with the state dimension.
    #[error("rank mismatch at lambda = {lambda}: r = {r}, n = {n}, d = {d}")]
    RankMismatch {
        lambda: f64,
        r: usize,
        n: usize,
        d: usize,
    },

    /// Parity was requested at a parameter where |E| is below the zero tolerance.
    #[error("Evans function is critical at endpoint lambda = {lambda}")]
    EndpointCritical { lambda: f64 },

    /// No subinterval of the scan window has a nonzero Evans sign.
    #[error("no hyperbolic subinterval in the scanned window")]
    NoHyperbolicWindow,

    /// The plus and minus subspaces do not intersect numerically.
    #[error("smallest principal angle {angle:.3e} rad exceeds {tol:.3e}: no kernel direction at lambda = {lambda}")]
    NoIntersection { lambda: f64, angle: f64, tol: f64 },

    /// Newton iteration on the collocation system stalled.
    #[error("Newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    /// Newton converged to the prescribed branch instead of a nontrivial solution.
    #[error("converged to the trivial branch (sup norm {norm:.3e} <= floor {floor:.3e})")]
    TrivialCollapse { norm: f64, floor: f64 },

    /// Continuation step size underflowed without reaching an endpoint event.
    #[error("continuation stalled at lambda = {lambda} (step {step:.3e})")]
    ContinuationStall { lambda: f64, step: f64 },

    /// A linear solve met a numerically singular matrix.
    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Convenience constructor for precondition violations.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
