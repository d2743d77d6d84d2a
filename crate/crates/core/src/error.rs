use thiserror::Error;

/// Why a return-map evaluation failed to come back to the section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoReturnReason {
    /// The orbit collapsed onto the origin before crossing the section again.
    Decayed,
    /// The search window closed without a crossing.
    WindowExhausted,
}

impl std::fmt::Display for NoReturnReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoReturnReason::Decayed => write!(f, "orbit decayed to the origin"),
            NoReturnReason::WindowExhausted => write!(f, "no crossing inside the search window"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size underflow at x = {x}")]
    StepSizeUnderflow { x: f64 },

    #[error("integration length {requested} exceeds the cap {max_x}")]
    MaxLengthExceeded { requested: f64, max_x: f64 },

    #[error("non-finite state encountered at x = {x}")]
    NonFiniteState { x: f64 },

    #[error("x = {x} lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { x: f64, start: f64, end: f64 },

    #[error("trajectory was recorded without dense output")]
    NoDenseOutput,

    #[error("trajectory is identically zero")]
    DegenerateTrajectory,

    #[error("need at least {needed} turning points, found {found}")]
    InsufficientEvents { needed: usize, found: usize },

    #[error("no return to the section from s = {s}: {reason}")]
    NoReturn { s: f64, reason: NoReturnReason },

    #[error("Newton iteration did not converge after {iterations} iterations (last s = {last_s})")]
    NoConvergence { iterations: usize, last_s: f64 },

    #[error("continuation step underflow at gamma = {gamma}")]
    StepUnderflow { gamma: f64 },

    #[error("branch contains no fold")]
    NoFoldInBranch,

    #[error("bracket [{lo}, {hi}] does not straddle the separatrix ({detail})")]
    BracketInvalid { lo: f64, hi: f64, detail: String },

    #[error("classifier undecided at s = {s}; narrowed bracket [{lo}, {hi}]")]
    UndecidedAtMidpoint { s: f64, lo: f64, hi: f64 },

    #[error("adaptive quadrature failed to reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
