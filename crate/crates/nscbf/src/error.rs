//! Crate-wide error type.

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: dimension mismatch, expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("model list must be non-empty")]
    EmptyModelList,

    #[error("invalid barrier tree: {0}")]
    InvalidTree(String),

    /// Gradient/Hessian evaluation hit the distance floor (state at the
    /// centre of a disk or two agents exactly coincident).
    #[error("singular gradient on {leaf}: distance {distance:.3e} below floor")]
    SingularGradient { leaf: String, distance: f64 },

    /// Reciprocal transform hit the barrier floor: the state is at or
    /// through the safe-set boundary of this smooth piece.
    #[error("barrier floor on {leaf}: h = {h:.3e}")]
    BarrierFloor { leaf: String, h: f64 },

    /// The safety QP has an empty feasible set. `rows` carries the leaf
    /// indices (or raw row indices when no leaf is associated) of a
    /// mutually infeasible subset when one was identified.
    #[error("safety QP infeasible; conflicting rows {rows:?}")]
    InfeasibleQp { rows: Vec<usize> },

    #[error("QP has {rows} rows, above the enumeration guard of {max}")]
    TooManyRows { rows: usize, max: usize },

    #[error("controller failed at step {step}: {source}")]
    ControllerFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("trajectory too short: {0}")]
    TooShort(&'static str),

    #[error("initial state is not strictly safe: h(x0) = {h}")]
    UnsafeStart { h: f64 },

    #[error(
        "agents {i} and {j} start in collision: distance {distance} <= required {required}"
    )]
    InitialCollision {
        i: usize,
        j: usize,
        distance: f64,
        required: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
