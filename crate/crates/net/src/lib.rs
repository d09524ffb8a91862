//! Network front ends for the stepguard verifier: the local verification
//! service, its client, and the intercepting forward proxy.

pub mod ca;
pub mod client;
pub mod error;
pub mod proxy;
pub mod service;

pub use ca::CertificateAuthority;
pub use client::{VerifierClient, VerifierEndpoint};
pub use error::{CaError, ClientError, ProxyError, ServeError};
pub use proxy::{run_proxy, FlowLog, FlowRecord, ProxyConfig, ProxyHandle, Upstream};
pub use service::{serve, Health, ServiceConfig, ServiceHandle};
