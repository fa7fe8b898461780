use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown variable group `{0}`")]
    UnknownGroup(String),

    #[error("incompatible variable groups: {0}")]
    IncompatibleGroups(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density evaluated to {value}, below the rounding tolerance")]
    NegativeDensity { value: f64 },

    #[error("degenerate mass {mass}: cannot normalize")]
    DegenerateMass { mass: f64 },

    #[error("singular matrix in {0}")]
    SingularMatrix(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("zero evidence at step {step} for observation {observation:?}")]
    ZeroEvidence { step: usize, observation: Vec<f64> },

    #[error("kernel `{0}` has no sampler")]
    MissingSampler(&'static str),

    #[error("rejection sampler exceeded {0} proposals")]
    RejectionCap(usize),

    #[error("all particle weights vanished at step {step}")]
    WeightCollapse { step: usize },

    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    GridTooLarge { cells: usize, cap: usize },

    #[error("accuracy not achievable in floating point: {0}")]
    Unachievable(String),

    #[error("objective became non-finite")]
    NonFiniteObjective,

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches the filter step index; errors that already carry one get it overwritten.
    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            Error::ZeroEvidence { observation, .. } => Error::ZeroEvidence { step, observation },
            Error::WeightCollapse { .. } => Error::WeightCollapse { step },
            e @ Error::Step { .. } => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    /// True for failures caused by the numbers rather than by the caller's input shape.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Step { source, .. } => source.is_numerical(),
            Error::NegativeDensity { .. }
            | Error::DegenerateMass { .. }
            | Error::SingularMatrix(_)
            | Error::SolverFailure(_)
            | Error::ZeroEvidence { .. }
            | Error::RejectionCap(_)
            | Error::WeightCollapse { .. }
            | Error::Unachievable(_)
            | Error::NonFiniteObjective => true,
            _ => false,
        }
    }
}
