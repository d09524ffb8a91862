use std::path::PathBuf;

use thiserror::Error;

use crate::permission::{AccessLevel, PermissionScope};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermissionError {
    #[error("unknown permission scope `{0}`")]
    UnknownScope(String),
    #[error("unknown access level `{0}` (expected read, write or none)")]
    UnknownLevel(String),
    #[error("scope `{scope}` cannot be granted `{level}`")]
    InvalidLevelForScope {
        scope: PermissionScope,
        level: AccessLevel,
    },
    #[error("no severity is defined for `{0}: none`")]
    NoSeverityForNone(PermissionScope),
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{}: malformed workflow at line {line}, column {column}: {message}", .path.display())]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: {message}", .path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{}: {context}: {source}", .path.display())]
    Permission {
        path: PathBuf,
        context: String,
        #[source]
        source: PermissionError,
    },
    #[error("job `{0}` does not exist")]
    UnknownJob(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EndpointMapError {
    #[error("endpoint map entry {index}: {message}")]
    Format { index: usize, message: String },
    #[error("endpoint map entry {index}: duplicate entry for {method} {pattern}")]
    Duplicate {
        index: usize,
        method: String,
        pattern: String,
    },
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed policy document: {message}", .path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("{}: field `{field}`: {source}", .path.display())]
    Invalid {
        path: PathBuf,
        field: String,
        #[source]
        source: PermissionError,
    },
    #[error("{}: document key `{key}` does not match file name `{stem}`", .path.display())]
    KeyMismatch {
        path: PathBuf,
        key: String,
        stem: String,
    },
    #[error("{}: duplicate policy for action `{action_id}`", .path.display())]
    Duplicate { path: PathBuf, action_id: String },
    #[error("invalid action id `{0}`")]
    InvalidActionId(String),
}
