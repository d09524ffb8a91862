//! Intercepting forward proxy.
//!
//! Requests to an intercepted API host, whether plain absolute-form or
//! inside a TLS-terminated CONNECT tunnel, are checked with the verifier
//! before anything is sent upstream. Denied requests get a synthesized 403.
//! Other hosts are forwarded or blind-tunneled without a check.

use std::collections::HashSet;
use std::convert::Infallible;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use bytes::Bytes;
use chrono::{DateTime, Utc};
use http::header::{self, HeaderMap, HeaderName, HeaderValue};
use http::{Method, Request, Response, StatusCode, Uri, Version};
use http_body_util::combinators::BoxBody;
use http_body_util::{BodyExt, Empty, Full};
use hyper::body::Incoming;
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper_rustls::HttpsConnector;
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::{TokioExecutor, TokioIo};
use serde::{Deserialize, Serialize};
use stepguard_core::endpoint::DEFAULT_API_HOST;
use stepguard_core::verifier::UNATTRIBUTED;
use stepguard_core::{Mode, VerifyRequest, VerifyResponse};
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::{TcpListener, TcpStream};
use tokio_rustls::TlsAcceptor;
use tokio_util::sync::CancellationToken;
use tokio_util::task::TaskTracker;

use crate::ca::CertificateAuthority;
use crate::client::VerifierEndpoint;
use crate::error::ProxyError;

pub const DENY_MESSAGE: &str = "Blocked by step-level permission policy";
pub const DENIED_HEADER: &str = "x-stepguard-denied";
pub const REASON_HEADER: &str = "x-stepguard-reason";
pub const DEFAULT_ATTRIBUTION_HEADER: &str = "x-stepguard-action";

const HOP_BY_HOP: &[&str] = &[
    "connection",
    "proxy-connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

type ProxyBody = BoxBody<Bytes, hyper::Error>;

/// Where allowed requests to intercepted hosts are sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upstream {
    /// The request's own host, over its own scheme.
    Live,
    /// A fixed plain-HTTP address; the original `Host` header is kept.
    Fixed(SocketAddr),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRecord {
    pub timestamp: DateTime<Utc>,
    pub intercepted: bool,
    pub action_id: Option<String>,
    pub method: String,
    pub host: String,
    pub path: String,
    pub decision: Option<VerifyResponse>,
    pub status: u16,
    /// The response was synthesized by the proxy.
    pub injected: bool,
    /// Denied because the verifier could not be consulted.
    pub infra_denial: bool,
    pub latency_ms: f64,
}

/// Line-delimited JSON flow log, optionally retained in memory.
#[derive(Default)]
pub struct FlowLog {
    writer: Option<Mutex<Box<dyn Write + Send>>>,
    retained: Option<Mutex<Vec<FlowRecord>>>,
}

impl std::fmt::Debug for FlowLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowLog").finish_non_exhaustive()
    }
}

impl FlowLog {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn to_writer(writer: impl Write + Send + 'static) -> Self {
        FlowLog {
            writer: Some(Mutex::new(Box::new(writer))),
            retained: None,
        }
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(Self::to_writer(OpenOptions::new().create(true).append(true).open(path)?))
    }

    pub fn in_memory() -> Self {
        FlowLog {
            writer: None,
            retained: Some(Mutex::new(Vec::new())),
        }
    }

    pub fn records(&self) -> Vec<FlowRecord> {
        self.retained
            .as_ref()
            .map(|r| r.lock().unwrap_or_else(|e| e.into_inner()).clone())
            .unwrap_or_default()
    }

    fn push(&self, record: FlowRecord) {
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_vec(&record).expect("flow record serializes");
            line.push(b'\n');
            let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = w.write_all(&line).and_then(|_| w.flush()) {
                tracing::error!(error = %e, "failed to write flow record");
            }
        }
        if let Some(retained) = &self.retained {
            retained.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        }
    }
}

#[derive(Debug)]
pub struct ProxyConfig {
    pub listen: SocketAddr,
    pub api_hosts: Vec<String>,
    pub upstream: Upstream,
    /// Enables TLS interception of CONNECT tunnels to API hosts.
    pub ca: Option<Arc<CertificateAuthority>>,
    pub verifier: VerifierEndpoint,
    /// Attribute every flow on this listener to one action.
    pub action_id: Option<String>,
    pub attribution_header: HeaderName,
    /// Refuse to start unless the verifier runs in this mode.
    pub expected_mode: Option<Mode>,
    pub grace: Duration,
    pub flows: Arc<FlowLog>,
}

impl ProxyConfig {
    pub fn new(listen: SocketAddr, verifier: VerifierEndpoint) -> Self {
        ProxyConfig {
            listen,
            api_hosts: vec![DEFAULT_API_HOST.to_string()],
            upstream: Upstream::Live,
            ca: None,
            verifier,
            action_id: None,
            attribution_header: HeaderName::from_static(DEFAULT_ATTRIBUTION_HEADER),
            expected_mode: None,
            grace: Duration::from_secs(5),
            flows: Arc::new(FlowLog::disabled()),
        }
    }
}

/// Action id for a flow: the listener's static id, else the attribution
/// header, else [`UNATTRIBUTED`].
pub fn resolve_action_id(static_id: Option<&str>, headers: &HeaderMap, attribution: &HeaderName) -> String {
    if let Some(id) = static_id.map(str::trim).filter(|s| !s.is_empty()) {
        return id.to_string();
    }
    headers
        .get(attribution)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| UNATTRIBUTED.to_string())
}

/// Removes hop-by-hop headers, including any named in `Connection`.
pub fn strip_hop_by_hop(headers: &mut HeaderMap) {
    let listed: Vec<HeaderName> = headers
        .get_all(header::CONNECTION)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .filter_map(|name| HeaderName::from_bytes(name.trim().as_bytes()).ok())
        .collect();
    for name in listed {
        headers.remove(name);
    }
    for name in HOP_BY_HOP {
        headers.remove(*name);
    }
}

fn normalize_host(host: &str) -> String {
    let host = host.trim().trim_end_matches('.').to_ascii_lowercase();
    match host.rsplit_once(':') {
        Some((name, port)) if !name.contains(':') && port.bytes().all(|b| b.is_ascii_digit()) => name.to_string(),
        _ => host,
    }
}

fn full(body: impl Into<Bytes>) -> ProxyBody {
    Full::new(body.into()).map_err(|never| match never {}).boxed()
}

fn empty() -> ProxyBody {
    Empty::new().map_err(|never| match never {}).boxed()
}

fn json_response(status: StatusCode, body: serde_json::Value) -> Response<ProxyBody> {
    let mut resp = Response::new(full(body.to_string()));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

/// The 403 sent in place of a denied request.
pub fn denial_response(decision: Option<&VerifyResponse>, reason: &str) -> Response<ProxyBody> {
    let body = serde_json::json!({
        "message": DENY_MESSAGE,
        "scope": decision.and_then(|d| d.scope),
        "required": decision.and_then(|d| d.level),
        "granted": decision.and_then(|d| d.granted),
    });
    let mut resp = json_response(StatusCode::FORBIDDEN, body);
    resp.headers_mut().insert(DENIED_HEADER, HeaderValue::from_static("1"));
    if let Ok(v) = HeaderValue::from_str(reason) {
        resp.headers_mut().insert(REASON_HEADER, v);
    }
    resp
}

/// Where an intercepted request was headed.
#[derive(Debug, Clone)]
struct Target {
    scheme: &'static str,
    host: String,
    /// `host[:port]` as the client addressed it.
    authority: String,
}

struct ProxyState {
    api_hosts: HashSet<String>,
    upstream: Upstream,
    ca: Option<Arc<CertificateAuthority>>,
    verifier: VerifierEndpoint,
    action_id: Option<String>,
    attribution_header: HeaderName,
    flows: Arc<FlowLog>,
    client: Client<HttpsConnector<HttpConnector>, Incoming>,
    cancel: CancellationToken,
    tracker: TaskTracker,
}

/// A running proxy.
pub struct ProxyHandle {
    addr: SocketAddr,
    cancel: CancellationToken,
    tracker: TaskTracker,
    grace: Duration,
    flows: Arc<FlowLog>,
}

impl ProxyHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn flows(&self) -> &Arc<FlowLog> {
        &self.flows
    }

    /// Stops accepting and waits up to the grace period for open flows.
    /// Returns false if flows were still open when the grace period ended.
    pub async fn shutdown(self) -> bool {
        self.cancel.cancel();
        self.tracker.close();
        tokio::time::timeout(self.grace, self.tracker.wait()).await.is_ok()
    }
}

pub async fn run_proxy(config: ProxyConfig) -> Result<ProxyHandle, ProxyError> {
    let api_hosts: HashSet<String> = config
        .api_hosts
        .iter()
        .map(|h| normalize_host(h))
        .filter(|h| !h.is_empty())
        .collect();
    if api_hosts.is_empty() {
        return Err(ProxyError::NoApiHosts);
    }
    let mode = config.verifier.mode().await?;
    if let Some(expected) = config.expected_mode {
        if expected != mode {
            return Err(ProxyError::ModeMismatch { expected, actual: mode });
        }
    }

    let mut roots = rustls::RootCertStore::empty();
    roots.extend(webpki_roots::TLS_SERVER_ROOTS.iter().cloned());
    let tls = rustls::ClientConfig::builder_with_provider(Arc::new(rustls::crypto::ring::default_provider()))
        .with_safe_default_protocol_versions()?
        .with_root_certificates(roots)
        .with_no_client_auth();
    let connector = hyper_rustls::HttpsConnectorBuilder::new()
        .with_tls_config(tls)
        .https_or_http()
        .enable_http1()
        .build();
    let client = Client::builder(TokioExecutor::new())
        .pool_idle_timeout(Duration::from_secs(30))
        .build(connector);

    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ProxyError::Bind {
            addr: config.listen,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ProxyError::Bind {
        addr: config.listen,
        source,
    })?;

    let cancel = CancellationToken::new();
    let tracker = TaskTracker::new();
    let state = Arc::new(ProxyState {
        api_hosts,
        upstream: config.upstream,
        ca: config.ca,
        verifier: config.verifier,
        action_id: config.action_id,
        attribution_header: config.attribution_header,
        flows: config.flows.clone(),
        client,
        cancel: cancel.clone(),
        tracker: tracker.clone(),
    });

    tracing::info!(%addr, %mode, "proxy listening");
    let accept_state = state.clone();
    tracker.spawn(async move {
        let state = accept_state;
        loop {
            tokio::select! {
                _ = state.cancel.cancelled() => break,
                accepted = listener.accept() => match accepted {
                    Ok((stream, _)) => {
                        let _ = stream.set_nodelay(true);
                        let st = state.clone();
                        state.tracker.spawn(async move { st.serve_client(stream).await });
                    }
                    Err(e) => tracing::warn!(error = %e, "accept failed"),
                },
            }
        }
    });

    Ok(ProxyHandle {
        addr,
        cancel,
        tracker,
        grace: config.grace,
        flows: config.flows,
    })
}

impl ProxyState {
    fn intercepts(&self, host: &str) -> bool {
        self.api_hosts.contains(host)
    }

    async fn serve_client(self: Arc<Self>, stream: TcpStream) {
        let state = self.clone();
        let svc = service_fn(move |req| {
            let st = state.clone();
            async move { Ok::<_, Infallible>(st.handle(req).await) }
        });
        let conn = http1::Builder::new()
            .serve_connection(TokioIo::new(stream), svc)
            .with_upgrades();
        tokio::pin!(conn);
        tokio::select! {
            res = conn.as_mut() => {
                if let Err(e) = res {
                    tracing::debug!(error = %e, "client connection ended");
                }
            }
            _ = self.cancel.cancelled() => {
                conn.as_mut().graceful_shutdown();
                let _ = conn.await;
            }
        }
    }

    async fn handle(self: Arc<Self>, req: Request<Incoming>) -> Response<ProxyBody> {
        if req.method() == Method::CONNECT {
            return self.connect(req).await;
        }
        let Some(host) = req.uri().host().map(normalize_host) else {
            return json_response(
                StatusCode::BAD_REQUEST,
                serde_json::json!({ "message": "proxy requests must use an absolute URI" }),
            );
        };
        let target = Target {
            scheme: if req.uri().scheme_str() == Some("https") { "https" } else { "http" },
            authority: req.uri().authority().map(|a| a.to_string()).unwrap_or_else(|| host.clone()),
            host,
        };
        if self.intercepts(&target.host) {
            self.intercepted(req, target).await
        } else {
            self.pass_through(req, target).await
        }
    }

    async fn connect(self: Arc<Self>, req: Request<Incoming>) -> Response<ProxyBody> {
        let Some(authority) = req.uri().authority().cloned() else {
            return json_response(
                StatusCode::BAD_REQUEST,
                serde_json::json!({ "message": "CONNECT needs host:port" }),
            );
        };
        let host = normalize_host(authority.host());
        let port = authority.port_u16().unwrap_or(443);

        if !self.intercepts(&host) {
            let upstream = match TcpStream::connect((host.as_str(), port)).await {
                Ok(s) => s,
                Err(e) => {
                    return json_response(
                        StatusCode::BAD_GATEWAY,
                        serde_json::json!({ "message": format!("cannot reach {authority}: {e}") }),
                    )
                }
            };
            self.tracker.spawn(async move {
                match hyper::upgrade::on(req).await {
                    Ok(upgraded) => {
                        let mut client = TokioIo::new(upgraded);
                        let mut upstream = upstream;
                        let _ = tokio::io::copy_bidirectional(&mut client, &mut upstream).await;
                    }
                    Err(e) => tracing::debug!(error = %e, "tunnel upgrade failed"),
                }
            });
            return Response::new(empty());
        }

        let config = match self.ca.as_ref().map(|ca| ca.server_config(&host)) {
            Some(Ok(config)) => config,
            Some(Err(e)) => {
                tracing::error!(error = %e, %host, "cannot mint leaf certificate");
                return self.refuse_tunnel(&host, "tls-unavailable");
            }
            None => return self.refuse_tunnel(&host, "tls-interception-disabled"),
        };
        let target = Target {
            scheme: "https",
            authority: if port == 443 { host.clone() } else { format!("{host}:{port}") },
            host,
        };
        let state = self.clone();
        self.tracker.spawn(async move {
            let upgraded = match hyper::upgrade::on(req).await {
                Ok(u) => u,
                Err(e) => {
                    tracing::debug!(error = %e, "tunnel upgrade failed");
                    return;
                }
            };
            match TlsAcceptor::from(config).accept(TokioIo::new(upgraded)).await {
                Ok(tls) => state.serve_intercepted(tls, target).await,
                Err(e) => tracing::warn!(error = %e, host = %target.host, "TLS handshake with client failed"),
            }
        });
        Response::new(empty())
    }

    /// An intercepted host cannot be inspected, so the tunnel is refused.
    fn refuse_tunnel(&self, host: &str, reason: &str) -> Response<ProxyBody> {
        self.flows.push(FlowRecord {
            timestamp: Utc::now(),
            intercepted: true,
            action_id: None,
            method: "CONNECT".into(),
            host: host.to_string(),
            path: String::new(),
            decision: None,
            status: 403,
            injected: true,
            infra_denial: true,
            latency_ms: 0.0,
        });
        denial_response(None, reason)
    }

    async fn serve_intercepted<S>(self: Arc<Self>, io: S, target: Target)
    where
        S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
    {
        let state = self.clone();
        let svc = service_fn(move |req: Request<Incoming>| {
            let st = state.clone();
            let target = target.clone();
            async move {
                if req.method() == Method::CONNECT {
                    return Ok::<_, Infallible>(json_response(
                        StatusCode::BAD_REQUEST,
                        serde_json::json!({ "message": "nested CONNECT is not supported" }),
                    ));
                }
                Ok(st.intercepted(req, target).await)
            }
        });
        let conn = http1::Builder::new().serve_connection(TokioIo::new(io), svc);
        tokio::pin!(conn);
        tokio::select! {
            res = conn.as_mut() => {
                if let Err(e) = res {
                    tracing::debug!(error = %e, "intercepted connection ended");
                }
            }
            _ = self.cancel.cancelled() => {
                conn.as_mut().graceful_shutdown();
                let _ = conn.await;
            }
        }
    }

    async fn intercepted(&self, req: Request<Incoming>, target: Target) -> Response<ProxyBody> {
        let started = Instant::now();
        let (mut parts, body) = req.into_parts();
        let action_id = resolve_action_id(self.action_id.as_deref(), &parts.headers, &self.attribution_header);
        parts.headers.remove(&self.attribution_header);
        let path_and_query = parts.uri.path_and_query().map(|p| p.as_str().to_string()).unwrap_or_else(|| "/".into());
        let check = VerifyRequest {
            action_id: action_id.clone(),
            method: parts.method.to_string(),
            url: format!("{}://{}{}", target.scheme, target.host, path_and_query),
            step_index: None,
        };

        let (resp, decision, injected, infra) = match self.verifier.verify(&check).await {
            Ok(decision) if decision.allow => {
                let (resp, injected) = self.forward(parts, body, &target, &path_and_query).await;
                (resp, Some(decision), injected, false)
            }
            Ok(decision) => {
                let resp = denial_response(Some(&decision), decision.reason.as_str());
                (resp, Some(decision), true, false)
            }
            Err(e) => {
                tracing::error!(error = %e, action = %action_id, "verifier unavailable; denying");
                (denial_response(None, "verifier-unavailable"), None, true, true)
            }
        };

        self.flows.push(FlowRecord {
            timestamp: Utc::now(),
            intercepted: true,
            action_id: Some(action_id),
            method: check.method,
            host: target.host,
            path: path_and_query.split('?').next().unwrap_or_default().to_string(),
            decision,
            status: resp.status().as_u16(),
            injected,
            infra_denial: infra,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        resp
    }

    async fn pass_through(&self, req: Request<Incoming>, target: Target) -> Response<ProxyBody> {
        let started = Instant::now();
        let (parts, body) = req.into_parts();
        let path_and_query = parts.uri.path_and_query().map(|p| p.as_str().to_string()).unwrap_or_else(|| "/".into());
        let method = parts.method.to_string();
        let (resp, injected) = self.send(parts, body, &target, &path_and_query, false).await;
        self.flows.push(FlowRecord {
            timestamp: Utc::now(),
            intercepted: false,
            action_id: None,
            method,
            host: target.host,
            path: path_and_query.split('?').next().unwrap_or_default().to_string(),
            decision: None,
            status: resp.status().as_u16(),
            injected,
            infra_denial: false,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        resp
    }

    async fn forward(
        &self,
        parts: http::request::Parts,
        body: Incoming,
        target: &Target,
        path_and_query: &str,
    ) -> (Response<ProxyBody>, bool) {
        self.send(parts, body, target, path_and_query, true).await
    }

    /// Sends upstream and relays the response. The flag is true when the
    /// response was synthesized because upstream could not be reached.
    async fn send(
        &self,
        mut parts: http::request::Parts,
        body: Incoming,
        target: &Target,
        path_and_query: &str,
        intercepted: bool,
    ) -> (Response<ProxyBody>, bool) {
        let uri = match (intercepted, self.upstream) {
            (true, Upstream::Fixed(addr)) => format!("http://{addr}{path_and_query}"),
            _ => format!("{}://{}{}", target.scheme, target.authority, path_and_query),
        };
        parts.uri = match uri.parse::<Uri>() {
            Ok(u) => u,
            Err(e) => {
                return (
                    json_response(StatusCode::BAD_REQUEST, serde_json::json!({ "message": e.to_string() })),
                    true,
                )
            }
        };
        parts.version = Version::HTTP_11;
        strip_hop_by_hop(&mut parts.headers);
        if !parts.headers.contains_key(header::HOST) {
            if let Ok(v) = HeaderValue::from_str(&target.authority) {
                parts.headers.insert(header::HOST, v);
            }
        }
        match self.client.request(Request::from_parts(parts, body)).await {
            Ok(resp) => {
                let (mut parts, body) = resp.into_parts();
                strip_hop_by_hop(&mut parts.headers);
                (Response::from_parts(parts, body.boxed()), false)
            }
            Err(e) => {
                tracing::warn!(error = %e, host = %target.host, "upstream request failed");
                (
                    json_response(
                        StatusCode::BAD_GATEWAY,
                        serde_json::json!({ "message": format!("upstream request failed: {e}") }),
                    ),
                    true,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_id_precedence() {
        let name = HeaderName::from_static(DEFAULT_ATTRIBUTION_HEADER);
        let mut headers = HeaderMap::new();
        assert_eq!(resolve_action_id(None, &headers, &name), UNATTRIBUTED);
        headers.insert(&name, HeaderValue::from_static(" tj-actions/changed-files "));
        assert_eq!(resolve_action_id(None, &headers, &name), "tj-actions/changed-files");
        assert_eq!(
            resolve_action_id(Some("coverallsapp/github-action"), &headers, &name),
            "coverallsapp/github-action"
        );
        headers.insert(&name, HeaderValue::from_static(""));
        assert_eq!(resolve_action_id(Some(" "), &headers, &name), UNATTRIBUTED);
    }

    #[test]
    fn hop_by_hop_headers_are_removed() {
        let mut headers = HeaderMap::new();
        headers.insert(header::CONNECTION, HeaderValue::from_static("keep-alive, x-secret"));
        headers.insert("x-secret", HeaderValue::from_static("1"));
        headers.insert("proxy-authorization", HeaderValue::from_static("Basic x"));
        headers.insert(header::TRANSFER_ENCODING, HeaderValue::from_static("chunked"));
        headers.insert("x-keep", HeaderValue::from_static("1"));
        strip_hop_by_hop(&mut headers);
        assert_eq!(headers.len(), 1);
        assert!(headers.contains_key("x-keep"));
    }

    #[test]
    fn host_normalization() {
        assert_eq!(normalize_host("API.GitHub.com:443"), "api.github.com");
        assert_eq!(normalize_host("api.github.com."), "api.github.com");
        assert_eq!(normalize_host("[::1]"), "[::1]");
    }

    #[tokio::test]
    async fn denial_body_shape() {
        let decision = VerifyResponse {
            allow: false,
            reason: stepguard_core::Reason::PolicyInsufficient,
            scope: Some(stepguard_core::PermissionScope::PullRequests),
            level: Some(stepguard_core::AccessLevel::Write),
            granted: Some(stepguard_core::AccessLevel::Read),
        };
        let resp = denial_response(Some(&decision), "policy-insufficient");
        assert_eq!(resp.status(), StatusCode::FORBIDDEN);
        assert_eq!(resp.headers()[DENIED_HEADER], "1");
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "message": DENY_MESSAGE,
                "scope": "pull-requests",
                "required": "write",
                "granted": "read",
            })
        );
    }
}
