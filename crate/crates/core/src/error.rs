use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {0:?} lies outside the parameter domain")]
    Domain([f64; 2]),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("point at signed distance {dist} is outside the tube of radius {rho0}")]
    Projection { dist: f64, rho0: f64 },
    #[error("newton iteration did not converge after {iters} steps (residual trace {trace:?})")]
    Newton { iters: usize, trace: Vec<f64> },
    #[error("height sup {sup} exceeds the gate delta0*rho0 = {limit}")]
    HeightTooLarge { sup: f64, limit: f64 },
    #[error("det(I - hL) = {0} fell below 1/2")]
    Gate(f64),
    #[error("grid shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("derivative order {order} needs at least {needed} grid nodes, got {got}")]
    Resolution { order: usize, needed: usize, got: usize },
    #[error("conjugate gradient stalled after {iters} iterations (residuals {residuals:?})")]
    Cg { iters: usize, residuals: Vec<f64> },
    #[error("height step rejected at t = {t}: {reason}; try a smaller time step")]
    StepRejected { t: f64, reason: String },
    #[error("ladder point eps = {eps} failed: {reason}")]
    LadderGate { eps: f64, reason: String },
    #[error("evaluation on the interface for a jump-aware field")]
    OnInterface,
}

pub type Result<T> = std::result::Result<T, Error>;
