use thiserror::Error;

use crate::model::{StateId, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("model validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("automaton is nondeterministic: state {state}, symbol {symbol:#b}")]
    Nondeterminism { state: usize, symbol: u32 },

    #[error("automaton is incomplete: state {state} has no edge on symbol {symbol:#b}")]
    Incompleteness { state: usize, symbol: u32 },

    #[error("automaton has no transition from state {state} on label {symbol:#b}")]
    AlphabetMismatch { state: usize, symbol: u32 },

    #[error("policy does not match model: {0}")]
    PolicyMismatch(String),

    #[error("linear system is singular or ill-conditioned: {0}")]
    SingularSystem(String),

    #[error("chain is not unichain ({classes} recurrent classes)")]
    NotUnichain { classes: usize },

    #[error("target unreachable from states {states:?}")]
    Unreachable { states: Vec<StateId> },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("numerical failure in solver: {0}")]
    NumericalFailure(String),

    #[error("model is not communicating")]
    NotCommunicating,

    #[error("no maximal accepting end component")]
    NoMaec,

    #[error("task cannot be satisfied with probability one from the initial state")]
    TaskUnsatisfiable,

    #[error("policy decoding degenerate at state {state}")]
    DegenerateDecoding { state: StateId },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, col, msg: msg.into() }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Nondeterminism { .. }
            | Error::Incompleteness { .. }
            | Error::AlphabetMismatch { .. }
            | Error::PolicyMismatch(_)
            | Error::Param(_)
            | Error::Io(_) => 2,
            Error::TaskUnsatisfiable | Error::NoMaec | Error::Unreachable { .. } => 3,
            Error::SingularSystem(_)
            | Error::NotUnichain { .. }
            | Error::Infeasible
            | Error::Unbounded
            | Error::NumericalFailure(_)
            | Error::NotCommunicating
            | Error::DegenerateDecoding { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
