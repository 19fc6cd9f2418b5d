use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfnError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown edge id {0}")]
    UnknownEdge(usize),

    #[error("edges must be distinct (got {0} twice)")]
    SameEdge(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("q-combine denominator 1+xy = {0:e} is not positive")]
    QDomain(f64),

    #[error("denominator 1+theta*Zx*Zy = {value:e} below floor on edge {edge}")]
    DenominatorFloor { edge: usize, value: f64 },

    #[error("leaf pattern has probability zero under the given parameters (sample {0})")]
    ZeroProbability(usize),

    #[error("{what}: n = {n} leaves exceeds the cap of {cap}")]
    CapExceeded { what: &'static str, n: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, CfnError>;
