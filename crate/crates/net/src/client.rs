use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http::{header, Method, Request, StatusCode};
use http_body_util::{BodyExt, Full};
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::TokioExecutor;
use serde::de::DeserializeOwned;
use stepguard_core::verifier::{Verifier, VerifierStats};
use stepguard_core::{Mode, VerifyRequest, VerifyResponse};

use crate::error::ClientError;
use crate::service::{describe, Health};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(5);

/// HTTP client for a verifier service. Cheap to clone; connections are pooled.
#[derive(Clone, Debug)]
pub struct VerifierClient {
    base: String,
    client: Client<HttpConnector, Full<Bytes>>,
}

impl VerifierClient {
    /// `endpoint` is `host:port` or an `http://` URL.
    pub fn new(endpoint: &str) -> Result<Self, ClientError> {
        let trimmed = endpoint.trim().trim_end_matches('/');
        let base = if trimmed.contains("://") {
            trimmed.to_string()
        } else {
            format!("http://{trimmed}")
        };
        let uri: http::Uri = base.parse().map_err(|_| ClientError::InvalidEndpoint(endpoint.to_string()))?;
        if uri.scheme_str() != Some("http") || uri.host().is_none() {
            return Err(ClientError::InvalidEndpoint(endpoint.to_string()));
        }
        let mut connector = HttpConnector::new();
        connector.set_nodelay(true);
        let client = Client::builder(TokioExecutor::new())
            .pool_idle_timeout(Duration::from_secs(60))
            .build(connector);
        Ok(VerifierClient { base, client })
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    async fn call<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<Vec<u8>>) -> Result<T, ClientError> {
        let mut builder = Request::builder().method(method).uri(format!("{}{path}", self.base));
        if body.is_some() {
            builder = builder.header(header::CONTENT_TYPE, "application/json");
        }
        let req = builder
            .body(Full::new(Bytes::from(body.unwrap_or_default())))
            .map_err(|e| ClientError::InvalidEndpoint(e.to_string()))?;
        let unreachable = |message: String| ClientError::Unreachable {
            endpoint: self.base.clone(),
            message,
        };
        let resp = tokio::time::timeout(REQUEST_TIMEOUT, self.client.request(req))
            .await
            .map_err(|_| unreachable("timed out".into()))?
            .map_err(|e| unreachable(e.to_string()))?;
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .map_err(|e| unreachable(e.to_string()))?
            .to_bytes();
        if status != StatusCode::OK {
            return Err(ClientError::Protocol {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn verify(&self, req: &VerifyRequest) -> Result<VerifyResponse, ClientError> {
        let body = serde_json::to_vec(req).expect("request serializes");
        self.call(Method::POST, "/v1/verify", Some(body)).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.call(Method::GET, "/v1/health", None).await
    }

    pub async fn stats(&self) -> Result<VerifierStats, ClientError> {
        self.call(Method::GET, "/v1/stats", None).await
    }
}

/// Where a proxy sends its checks: a verifier service, or one in process.
#[derive(Clone, Debug)]
pub enum VerifierEndpoint {
    Remote(VerifierClient),
    Local(Arc<Verifier>),
}

impl VerifierEndpoint {
    pub async fn verify(&self, req: &VerifyRequest) -> Result<VerifyResponse, ClientError> {
        match self {
            VerifierEndpoint::Remote(client) => client.verify(req).await,
            VerifierEndpoint::Local(verifier) => {
                let descriptor = describe(req).map_err(|body| ClientError::Protocol { status: 400, body })?;
                Ok(VerifyResponse::from(&verifier.check(&descriptor, req.step_index)))
            }
        }
    }

    pub async fn mode(&self) -> Result<Mode, ClientError> {
        match self {
            VerifierEndpoint::Remote(client) => Ok(client.health().await?.mode),
            VerifierEndpoint::Local(verifier) => Ok(verifier.mode()),
        }
    }
}
