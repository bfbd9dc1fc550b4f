use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("p = {0} is outside [2, 3)")]
    PRange(f64),

    #[error("mesh {mesh} too coarse for oscillator n = {n}: need at most {max}")]
    MeshTooCoarse { n: u32, mesh: f64, max: f64 },

    #[error("expression error at position {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("flow Jacobian degenerate at t = {t}: condition number {cond:.3e} at node {node}")]
    FlowDegenerate { t: f64, node: usize, cond: f64 },

    #[error("scale overflow at t = {t}, node {node}: |log E| = {log_scale:.1} exceeds 700")]
    ScaleOverflow { t: f64, node: usize, log_scale: f64 },

    #[error("segment [{t0}, {t1}] carries Lévy area; the staged solvers need an area-free driver, use the joint solver")]
    AreaInStagedSolver { t0: f64, t1: f64 },

    #[error("scale E = {value} is not positive at node {node}")]
    NonPositiveScale { node: usize, value: f64 },

    #[error("map is not strictly increasing in r: derivative {0}")]
    NotIncreasing(f64),

    #[error("CFL condition violated at t = {t}: dt = {dt:.3e} exceeds stable step {max_dt:.3e}")]
    Cfl { t: f64, dt: f64, max_dt: f64 },

    #[error("non-finite value in solution at t = {t}, node {node}")]
    NonFinite { t: f64, node: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("requested time {t} is outside the bundle horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("no inverse flow stored for t = {0}")]
    MissingInverse(f64),

    #[error("total mass underflow at t = {t}: {mass:e}")]
    MassUnderflow { t: f64, mass: f64 },

    #[error("model file: {0}")]
    Model(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
