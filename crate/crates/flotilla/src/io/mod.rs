//! Text formats: YAML specifications, deployment files, constraint files,
//! fact bases and simulation logs. Every emitter here is byte-deterministic
//! and every parser round-trips what the matching emitter produces.

pub mod constraints;
pub mod deployment;
pub mod facts;
pub mod log;
pub mod yaml;

pub use constraints::{emit_constraints, parse_constraints};
pub use deployment::{emit_deployment, parse_deployment};
pub use facts::{emit_fact_base, parse_fact_base, FactBase, OverloadSpan};
pub use log::{parse_simulation_log, LogLine, ParsedLog};
pub use yaml::{emit_application, emit_infrastructure, parse_application, parse_infrastructure};

/// Error raised by any parser in this module.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("yaml: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid specification:\n{0}")]
    Invalid(String),
}

impl ParseError {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        ParseError::Line {
            line,
            message: message.into(),
        }
    }
}
