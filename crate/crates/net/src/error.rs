use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use stepguard_core::{Mode, PolicyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaError {
    #[error("certificate generation failed: {0}")]
    Certificate(#[from] rcgen::Error),
    #[error("TLS configuration rejected: {0}")]
    Tls(#[from] rustls::Error),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid verifier endpoint `{0}`")]
    InvalidEndpoint(String),
    #[error("verifier at {endpoint} is unreachable: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("verifier rejected the request with status {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("undecodable verifier response: {0}")]
    Decode(String),
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("service failed: {0}")]
    Io(#[from] io::Error),
    #[error("service task failed: {0}")]
    Join(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("no API hostnames to intercept")]
    NoApiHosts,
    #[error("verifier health check failed: {0}")]
    Verifier(#[from] ClientError),
    #[error("verifier runs in {actual} mode, proxy was started for {expected} mode")]
    ModeMismatch { expected: Mode, actual: Mode },
    #[error("upstream TLS setup failed: {0}")]
    Tls(#[from] rustls::Error),
}
