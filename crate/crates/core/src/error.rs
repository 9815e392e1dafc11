use thiserror::Error;

use crate::play::Branch;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("negative threshold r = {0}")]
    NegativeThreshold(f64),

    #[error("invalid memory curve: {0}")]
    InvalidCurve(String),

    #[error("input {w} lies on the wrong side of the current state {current} for a {branch:?} branch")]
    WrongSide { w: f64, current: f64, branch: Branch },

    #[error("curve continuation infeasible: |{value}| exceeds the remaining support {room}")]
    InfeasibleContinuation { value: f64, room: f64 },

    #[error("deformation parameter a = {a} outside [0, {max}]")]
    DeformOutOfRange { a: f64, max: f64 },

    #[error("memory curve does not have slope {slope} on (0, {r0})")]
    SlopePrecondition { slope: f64, r0: f64 },

    #[error("empty input sequence")]
    EmptySequence,

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("convexification failed: {0}")]
    Convexify(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("Newton stagnated after {iterations} iterations (residual {residual:e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("negative Nemytskii derivative {0} (density invalid)")]
    NegativeDerivative(f64),

    #[error("time step {tau} is not below tau0 = {tau0}")]
    TimeStepTooLarge { tau: f64, tau0: f64 },

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("initial data incompatible at {count} node(s); first: {first}")]
    Incompatible { count: usize, first: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("monitor produced a non-finite value: {0}")]
    Monitor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
