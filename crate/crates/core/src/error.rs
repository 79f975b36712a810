use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time {time} is not aligned to the grid (step {step})")]
    OffGrid { time: f64, step: f64 },

    #[error("paths live on different grids")]
    GridMismatch,

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("epsilon {eps} is not a positive multiple of the grid step {step}")]
    EpsilonNotOnGrid { eps: f64, step: f64 },

    #[error("invalid epsilon schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("exact fBm generation needs {requested} nodes, capacity is {capacity}")]
    Capacity { requested: usize, capacity: usize },

    #[error("decomposition needs the simulator's component log: {0}")]
    MissingComponentLog(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("argument {value} is outside the sampled range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid exponent grid: {0}")]
    InvalidExponentGrid(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
