use thiserror::Error;

/// Errors raised by the solver, the integrators and the scenario driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feasible set is empty")]
    InfeasibleSet,

    #[error("feasible set is unbounded")]
    UnboundedSet,

    #[error("dimension {dim} exceeds the limit {limit} for this operation")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("iteration limit reached in {0}")]
    NoConvergence(&'static str),

    #[error("operator is not differentiable at the clamped boundary (component {component})")]
    DomainError { component: usize },

    #[error("route {route} references missing link {link}")]
    BadRouteIndex { route: usize, link: usize },

    #[error("operator is not strongly monotone on the feasible set (modulus {modulus:e})")]
    NotStronglyMonotone { modulus: f64 },

    #[error("nonpositive strong-monotonicity modulus {0:e}")]
    NonpositiveModulus(f64),

    #[error("no solution found by active-set enumeration")]
    NoSolutionFound,

    #[error("step h = {0} exceeds 1")]
    StepTooLarge(f64),

    #[error("dynamics disturbance left the feasible set at t = {time}")]
    AdmissibilityViolated { time: f64 },

    #[error("initial point is not feasible")]
    InfeasibleStart,

    #[error("invalid input: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
