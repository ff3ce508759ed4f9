//! Numerical detection and global continuation of homoclinic bifurcations
//! in parametrized nonautonomous ODEs.
//!
//! The toolkit works with Carathéodory-type systems `ẋ = f(t, x, λ)` whose
//! right-hand side may be discontinuous in `t` at finitely many declared
//! switching times, together with a prescribed branch of bounded entire
//! solutions `φ_λ`. It provides:
//!
//! * [`system`] — system descriptions, adaptive Runge–Kutta integration
//!   segmented at switching times, and transition matrices of the
//!   variational equation in overflow-safe factored form;
//! * [`dichotomy`] — exponential-dichotomy subspaces on both half-lines
//!   extracted from singular value decompositions of the propagator,
//!   decay-constant fits and Fredholm index bookkeeping;
//! * [`evans`] — a continuous global Evans function over a parameter grid,
//!   with certified sign changes, touch-zeros and endpoint parity;
//! * [`cover`] — locally finite interval covers of the critical set, the
//!   associated parity map and bifurcation indices of continua;
//! * [`homoclinic`] — collocation boundary-value solves for homoclinic
//!   perturbations, pseudo-arclength branch continuation and continuum
//!   classification;
//! * [`example`] — a built-in planar example family with closed-form
//!   solutions, used as ground truth in tests and by `verify` commands.
//!
//! All operations are pure functions of their inputs; [`system::SystemSpec`]
//! is immutable after construction and can be shared across threads.

pub mod cover;
pub mod dichotomy;
pub mod error;
pub mod evans;
pub mod example;
pub mod homoclinic;
pub mod linalg;
pub mod ode;
pub mod system;

pub use error::Error;
pub use system::SystemSpec;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Default numerical parameters shared by the high-level operations.
pub mod defaults {
    /// Half-line truncation horizon for dichotomy subspaces.
    pub const HORIZON: f64 = 20.0;
    /// Truncation horizon for the homoclinic boundary-value problem.
    pub const BVP_HORIZON: f64 = 20.0;
    /// Target mesh width for the collocation mesh.
    pub const MESH_WIDTH: f64 = 0.05;
    /// Local error tolerance per accepted integrator step.
    pub const ODE_TOL: f64 = 1e-10;
    /// QR renormalization window for the factored propagator.
    pub const QR_WINDOW: f64 = 1.0;
    /// Minimal singular-value ratio accepted as a hyperbolic splitting.
    pub const GAP_THRESHOLD: f64 = 1e2;
    /// Evans zero tolerance, relative to the maximal |E| on a scan.
    pub const ZERO_TOL_REL: f64 = 1e-8;
    /// Bracket width at which sign-change refinement stops.
    pub const REFINE_TOL: f64 = 1e-6;
    /// Critical values closer than this are merged into one cover interval.
    pub const CLUSTER_TOL: f64 = 1e-5;
    /// Largest principal angle (radians) tolerated by basis alignment.
    pub const ANGLE_CAP: f64 = std::f64::consts::FRAC_PI_3;
    /// Newton residual tolerance for the collocation system.
    pub const NEWTON_TOL: f64 = 1e-10;
    /// Solutions with sup norm below this count as the trivial branch.
    pub const TRIVIALITY_FLOOR: f64 = 1e-6;
    /// Sup-norm bound above which a branch is reported as unbounded.
    pub const NORM_CAP: f64 = 1e6;
    /// Initial amplitude used when switching onto a bifurcating branch.
    pub const SWITCH_AMPLITUDE: f64 = 1e-2;
    /// Margin kept from open parameter-interval endpoints.
    pub const BOUNDARY_MARGIN: f64 = 1e-3;
}
