use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index out of domain: state {state}, action {action}")]
    OutOfDomain { state: usize, action: usize },
    #[error("action unavailable: state {state}, action {action}")]
    ActionUnavailable { state: usize, action: usize },
    #[error("no regression data")]
    NoRegressionData,
    #[error("oracle scale exceeded: {0}")]
    OracleScaleExceeded(String),
    #[error("invalid function class: {0}")]
    InvalidClass(String),
    #[error("unsupported behaviour: zero behaviour probability at state {state}, action {action}")]
    UnsupportedBehaviour { state: usize, action: usize },
    #[error("invalid configuration: key `{key}`: {msg}")]
    InvalidConfig { key: String, msg: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("requires exact-eval artifacts: {0}")]
    MissingArtifacts(String),
}
