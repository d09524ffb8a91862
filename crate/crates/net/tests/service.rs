use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use stepguard_core::policy::{load_knowledge, save_policy};
use stepguard_core::verifier::VerifierStats;
use stepguard_core::{
    AccessLevel, EndpointMap, KnowledgeBase, LoadOptions, Mode, PermissionScope, PermissionSet, Provenance, Reason,
    StepPolicy, Verifier, VerifyOptions, VerifyRequest,
};
use stepguard_net::{serve, ServiceConfig, ServiceHandle, VerifierClient};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

use AccessLevel::{Read, Write};
use PermissionScope::{Contents, PullRequests};

fn changed_files_kb() -> KnowledgeBase {
    KnowledgeBase::new(Provenance::StaticDeclared).with_policy(
        "tj-actions/changed-files",
        PermissionSet::none().with(PullRequests, Read).with(Contents, Read),
    )
}

async fn start(kb: KnowledgeBase, mode: Mode, config: ServiceConfig) -> ServiceHandle {
    let verifier = Verifier::new(kb, EndpointMap::seed(), VerifyOptions::from(mode));
    serve("127.0.0.1:0".parse().unwrap(), Arc::new(verifier), config)
        .await
        .unwrap()
}

fn request(action: &str, method: &str, path: &str) -> VerifyRequest {
    VerifyRequest {
        action_id: action.into(),
        method: method.into(),
        url: format!("https://api.github.com{path}"),
        step_index: None,
    }
}

/// Sends one HTTP/1.1 request on `stream` and reads exactly one response.
async fn exchange(stream: &mut TcpStream, method: &str, path: &str, body: &str) -> (u16, String) {
    let head = format!(
        "{method} {path} HTTP/1.1\r\nhost: verifier\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).await.unwrap();
    stream.write_all(body.as_bytes()).await.unwrap();

    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    loop {
        let n = stream.read(&mut chunk).await.unwrap();
        assert!(n > 0, "connection closed before a full response");
        buf.extend_from_slice(&chunk[..n]);
        let Some(end) = buf.windows(4).position(|w| w == b"\r\n\r\n") else {
            continue;
        };
        let head = String::from_utf8_lossy(&buf[..end]).to_ascii_lowercase();
        let length: usize = head
            .lines()
            .find_map(|l| l.strip_prefix("content-length:"))
            .map(|v| v.trim().parse().unwrap())
            .unwrap_or(0);
        if buf.len() >= end + 4 + length {
            let status = head[9..12].parse().unwrap();
            let body = String::from_utf8_lossy(&buf[end + 4..end + 4 + length]).into_owned();
            return (status, body);
        }
    }
}

#[tokio::test]
async fn verify_reports_scope_level_and_granted() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let client = VerifierClient::new(&handle.addr().to_string()).unwrap();

    let read = client
        .verify(&request("tj-actions/changed-files", "GET", "/repos/o/r/pulls"))
        .await
        .unwrap();
    assert!(read.allow);
    assert_eq!(read.reason, Reason::PolicySatisfied);
    assert_eq!((read.scope, read.level, read.granted), (Some(PullRequests), Some(Read), Some(Read)));

    let review = client
        .verify(&request("tj-actions/changed-files", "POST", "/repos/o/r/pulls/1/reviews"))
        .await
        .unwrap();
    assert!(!review.allow);
    assert_eq!(review.reason, Reason::PolicyInsufficient);
    assert_eq!((review.scope, review.level, review.granted), (Some(PullRequests), Some(Write), Some(Read)));

    let unknown = client
        .verify(&request("tj-actions/changed-files", "GET", "/not/a/known/endpoint"))
        .await
        .unwrap();
    assert!(!unknown.allow);
    assert_eq!(unknown.reason, Reason::UnknownEndpoint);
    assert_eq!((unknown.scope, unknown.level), (None, None));

    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn wire_format_field_names() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let mut stream = TcpStream::connect(handle.addr()).await.unwrap();
    let body = json!({
        "action_id": "tj-actions/changed-files",
        "method": "GET",
        "url": "https://api.github.com/repos/o/r/pulls",
        "step_index": 3,
    });
    let (status, text) = exchange(&mut stream, "POST", "/v1/verify", &body.to_string()).await;
    assert_eq!(status, 200);
    let value: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(
        value,
        json!({
            "allow": true,
            "reason": "policy-satisfied",
            "scope": "pull-requests",
            "level": "read",
            "granted": "read",
        })
    );
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn malformed_requests_get_400_and_keep_the_connection() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let mut stream = TcpStream::connect(handle.addr()).await.unwrap();

    let cases = [
        "{not json".to_string(),
        json!({ "action_id": "a", "method": "GET" }).to_string(),
        json!({ "action_id": "a", "method": "GET", "url": "https://api.github.com/", "extra": 1 }).to_string(),
        json!({ "action_id": "a", "method": "GET", "url": "not a url" }).to_string(),
        json!({ "action_id": "a", "method": "", "url": "https://api.github.com/user" }).to_string(),
        json!({ "action_id": "a", "method": "GE T", "url": "https://api.github.com/user" }).to_string(),
    ];
    for body in &cases {
        let (status, text) = exchange(&mut stream, "POST", "/v1/verify", body).await;
        assert_eq!(status, 400, "{body}");
        let value: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["error"], "protocol-error", "{body}");
        assert!(value["message"].as_str().is_some_and(|m| !m.is_empty()));
    }

    let good = json!({
        "action_id": "tj-actions/changed-files",
        "method": "GET",
        "url": "https://api.github.com/repos/o/r/pulls",
    });
    let (status, text) = exchange(&mut stream, "POST", "/v1/verify", &good.to_string()).await;
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_str::<Value>(&text).unwrap()["allow"], true);

    let (status, _) = exchange(&mut stream, "GET", "/v2/verify", "").await;
    assert_eq!(status, 404);
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn health_and_stats() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let client = VerifierClient::new(&handle.url()).unwrap();
    let health = client.health().await.unwrap();
    assert_eq!((health.status.as_str(), health.mode), ("ok", Mode::Enforcement));

    client
        .verify(&request("tj-actions/changed-files", "GET", "/repos/o/r/pulls"))
        .await
        .unwrap();
    client
        .verify(&request("tj-actions/changed-files", "POST", "/repos/o/r/deployments"))
        .await
        .unwrap();
    client
        .verify(&request("tj-actions/changed-files", "POST", "/graphql"))
        .await
        .unwrap();
    let stats: VerifierStats = client.stats().await.unwrap();
    assert_eq!(stats.mode, Mode::Enforcement);
    assert_eq!(stats.total, 3);
    assert_eq!(stats.allowed, 1);
    assert_eq!(stats.denied, 2);
    assert_eq!(stats.graphql, 1);
    assert_eq!(stats.policies, 1);
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn reload_swaps_the_knowledge_base() {
    let dir = tempfile::tempdir().unwrap();
    let read_only = StepPolicy::new("tj-actions/changed-files", PermissionSet::none().with(PullRequests, Read)).unwrap();
    save_policy(dir.path(), &read_only).unwrap();
    let kb = load_knowledge(dir.path(), LoadOptions::default()).unwrap();
    let config = ServiceConfig {
        knowledge: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let handle = start(kb, Mode::Enforcement, config).await;
    let client = VerifierClient::new(&handle.url()).unwrap();
    let review = request("tj-actions/changed-files", "POST", "/repos/o/r/pulls/1/reviews");
    assert!(!client.verify(&review).await.unwrap().allow);

    let write = StepPolicy::new("tj-actions/changed-files", PermissionSet::none().with(PullRequests, Write)).unwrap();
    save_policy(dir.path(), &write).unwrap();
    let http = reqwest::Client::new();
    let resp = http.post(format!("{}/v1/reload", handle.url())).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert!(client.verify(&review).await.unwrap().allow);

    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let resp = http.post(format!("{}/v1/reload", handle.url())).send().await.unwrap();
    assert_eq!(resp.status(), 422);
    assert!(client.verify(&review).await.unwrap().allow, "failed reload keeps the old policies");
    handle.shutdown().await.unwrap();
}

#[tokio::test]
async fn reload_without_source_conflicts() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let resp = reqwest::Client::new()
        .post(format!("{}/v1/reload", handle.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 409);
    handle.shutdown().await.unwrap();
}

fn policy_of(dir: &Path, action: &str) -> PermissionSet {
    load_knowledge(dir, LoadOptions::default())
        .unwrap()
        .lookup(action)
        .unwrap_or_else(|| panic!("no learned policy for {action}"))
        .permissions
}

#[tokio::test]
async fn learning_session_writes_policies_on_shutdown() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        learned_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let handle = start(KnowledgeBase::new(Provenance::RuntimeLearned), Mode::Learning, config).await;
    let client = VerifierClient::new(&handle.url()).unwrap();

    let trace = [
        ("actions/checkout", "GET", "/repos/o/r/contents/README.md"),
        ("tj-actions/changed-files", "GET", "/repos/o/r/pulls/7/files"),
        ("tj-actions/changed-files", "GET", "/repos/o/r/pulls/7"),
        ("reviewdog/action-markdownlint", "GET", "/repos/o/r/pulls/7/files"),
        ("reviewdog/action-markdownlint", "POST", "/repos/o/r/pulls/7/reviews"),
        ("reviewdog/action-markdownlint", "GET", "/not/mapped"),
        ("unattributed", "POST", "/repos/o/r/issues"),
    ];
    for (action, method, path) in trace {
        let resp = client.verify(&request(action, method, path)).await.unwrap();
        assert!(resp.allow, "learning mode allows {method} {path}");
        assert_eq!(resp.reason, Reason::LearningModeAllow);
    }

    let written = handle.shutdown().await.unwrap();
    assert_eq!(written.len(), 3);
    assert_eq!(policy_of(dir.path(), "actions/checkout"), PermissionSet::none().with(Contents, Read));
    assert_eq!(
        policy_of(dir.path(), "tj-actions/changed-files"),
        PermissionSet::none().with(PullRequests, Read)
    );
    assert_eq!(
        policy_of(dir.path(), "reviewdog/action-markdownlint"),
        PermissionSet::none().with(PullRequests, Write)
    );
}

#[tokio::test]
async fn concurrent_checks_from_one_client() {
    let handle = start(changed_files_kb(), Mode::Enforcement, ServiceConfig::default()).await;
    let client = VerifierClient::new(&handle.url()).unwrap();
    let tasks: Vec<_> = (0..64)
        .map(|i| {
            let client = client.clone();
            tokio::spawn(async move {
                let (method, path, allow) = if i % 2 == 0 {
                    ("GET", format!("/repos/o/r/pulls/{i}"), true)
                } else {
                    ("PUT", format!("/repos/o/r/pulls/{i}/merge"), false)
                };
                let resp = client
                    .verify(&request("tj-actions/changed-files", method, &path))
                    .await
                    .unwrap();
                assert_eq!(resp.allow, allow, "{method} {path}");
            })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    assert_eq!(handle.verifier().stats().total, 64);
    handle.shutdown().await.unwrap();
}
