//! Numerical instantiation of the curvature algebra, integral identities,
//! boundary operators, stability forms and first-variation formulas for
//! hypersurfaces with capillary boundary.
//!
//! Two ambient scenarios are implemented: the Euclidean half-space
//! `{x_{n+1} > 0}` supported on the hyperplane `{x_{n+1} = 0}`, and the
//! upper half-space model of hyperbolic space supported on the horosphere
//! `{x_{n+1} = 1}`.
//!
//! The pipeline is
//!
//! ```text
//! symfun  ->  ambient  ->  immersion  ->  operators  ->  identities
//!                                            |             stability
//!                                            +---------->  variation
//! ```
//!
//! Surfaces are discretized on pole-regular tensor grids: Gauss–Jacobi nodes
//! in the square of the polar radius, equispaced nodes in periodic
//! directions. Fields are differentiated by spectral collocation on those
//! grids.

pub mod ambient;
pub mod driver;
pub mod grid;
pub mod identities;
pub mod immersion;
pub mod jet;
pub mod operators;
pub mod report;
pub mod stability;
pub mod symfun;
pub mod variation;

mod sum;

pub use ambient::{Model, SpaceForm};
pub use immersion::{DiscreteImmersion, ParametricPatch};
pub use operators::SurfaceField;
pub use report::VerificationReport;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical consistency error: {0}")]
    NumericalConsistency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("discretization error: {0}")]
    Discretization(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("precondition error: {0}")]
    Precondition(String),
    #[error("degenerate contact angle: {0}")]
    DegenerateAngle(String),
    #[error("degenerate normalizer: {0}")]
    DegenerateNormalizer(String),
    #[error("basis error: {0}")]
    Basis(String),
    #[error("flow breakdown at step {step}: {reason}")]
    FlowBreakdown { step: usize, reason: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Binomial coefficient as a float; zero outside `0 <= k <= n`.
pub fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}
