use thiserror::Error;

use crate::mdp::Action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("resource vector length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid contract: {0}")]
    InvalidContract(String),
    #[error("invalid service type {index}: {reason}")]
    InvalidService { index: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("action {action} is not valid in this state")]
    InvalidAction { action: Action },
    #[error("departure of type {service} from a domain with no running instance")]
    CountUnderflow { service: usize },
    #[error("the departing domain must be given exactly when the action is `none`")]
    DepartingDomainMismatch,
    #[error("state is inconsistent with the contract: {0}")]
    InconsistentState(String),
    #[error("target state is not a successor of (state, action)")]
    NotASuccessor,
    #[error("state space exceeds the configured cap of {cap} states")]
    StateCapExceeded { cap: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible action {action} for request {request}")]
    InfeasibleAction { action: Action, request: u64 },
    #[error("the environment has no pending decision")]
    Finished,
    #[error("the episode trace has no requests")]
    EmptyTrace,
    #[error("malformed trace record on line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference average profit must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("policy file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported policy format version {0}")]
    UnsupportedVersion(u32),
    #[error("policy was produced for config {found}, but the loaded config hashes to {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("policy entry {line} does not fit the contract: {reason}")]
    Incompatible { line: usize, reason: String },
}
