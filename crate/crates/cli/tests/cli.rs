use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use stepguard_core::policy::{load_knowledge, load_static};
use stepguard_core::{analyze_corpus, LoadOptions, PermissionScope};
use stepguard_testkit::FakeApi;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stepguard"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn free_addr() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

fn wait_for_port(addr: SocketAddr) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while std::net::TcpStream::connect(addr).is_err() {
        assert!(Instant::now() < deadline, "nothing listening on {addr}");
        std::thread::sleep(Duration::from_millis(20));
    }
}

/// Kills the child on drop so failed assertions do not leak processes.
struct Running(Child);

impl Running {
    fn spawn(cmd: &mut Command) -> Running {
        Running(cmd.stdout(Stdio::null()).stderr(Stdio::piped()).spawn().unwrap())
    }

    fn interrupt(mut self) -> std::process::ExitStatus {
        let pid = self.0.id().to_string();
        assert!(Command::new("kill").args(["-INT", &pid]).status().unwrap().success());
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            if let Some(status) = self.0.try_wait().unwrap() {
                return status;
            }
            assert!(Instant::now() < deadline, "process ignored SIGINT");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn analyze_reports_the_fixture_corpus() {
    let corpus = fixtures().join("corpus");
    let kb = fixtures().join("knowledge.json");
    let out = run(bin().args(["analyze", "--format", "json", "--workflows"]).arg(&corpus).arg("--knowledge").arg(&kb));
    let report = stdout_json(&out);
    assert_eq!(report["totals"]["jobs"], 120);
    assert_eq!(report["workflows"], 30);

    let expected = analyze_corpus(&corpus, &load_static(&kb, LoadOptions::default()).unwrap());
    assert_eq!(report["totals"]["overprivileged"], expected.totals.overprivileged);
    let code = if expected.critical_findings() > 0 { 2 } else { 0 };
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));

    let table = run(bin().args(["analyze", "--workflows"]).arg(&corpus).arg("--knowledge").arg(&kb));
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.contains("Jobs: 120"), "{text}");
    assert!(text.contains("markdown-lint.yml :: markdownlint"), "{text}");
    assert!(text.contains("excess pull-requests:write [High]"), "{text}");
}

#[test]
fn analyze_empty_directory_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["analyze", "--format", "json", "--workflows"])
        .arg(dir.path())
        .arg("--knowledge")
        .arg(fixtures().join("knowledge.json")));
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["totals"]["jobs"], 0);
    assert_eq!(report["overprivileged_fraction"], 0.0);
}

#[test]
fn analyze_rejects_missing_inputs() {
    let out = run(bin().args(["analyze", "--workflows", "/nonexistent", "--knowledge"]).arg(fixtures().join("knowledge.json")));
    assert_eq!(out.status.code(), Some(1));
    let out = run(bin().args(["analyze", "--workflows"]).arg(fixtures()).args(["--knowledge", "/nonexistent.json"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent.json"));
}

#[test]
fn surface_reports_reduction() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixtures().join("surface.yml"), dir.path().join("surface.yml")).unwrap();
    let out = run(bin()
        .args(["surface", "--format", "json", "--workflows"])
        .arg(dir.path())
        .arg("--knowledge")
        .arg(fixtures().join("knowledge.json")));
    assert!(out.status.success());
    let rows = stdout_json(&out);
    let row = &rows[0];
    assert_eq!(row["write_needing"], 1);
    assert_eq!(row["write_granted"], 6);
    assert_eq!(row["basis"], "job-required");
    assert!((row["reduction"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-9);
}

#[test]
fn diff_reports_both_directions() {
    let dir = tempfile::tempdir().unwrap();
    let stat = dir.path().join("static.json");
    std::fs::write(
        &stat,
        r#"{"tj-actions/changed-files": {"pull-requests": "read"}, "actions/checkout": {"contents": "read"}}"#,
    )
    .unwrap();
    let learned = dir.path().join("learned");
    std::fs::create_dir(&learned).unwrap();
    std::fs::write(learned.join("tj-actions%2Fchanged-files.json"), r#"{"tj-actions/changed-files": {}}"#).unwrap();
    std::fs::write(
        learned.join("actions%2Fcheckout.json"),
        r#"{"actions/checkout": {"contents": "read", "statuses": "read"}}"#,
    )
    .unwrap();

    let out = run(bin().args(["diff", "--format", "json", "--static"]).arg(&stat).arg("--learned").arg(&learned));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let diff = stdout_json(&out);
    assert_eq!(diff["excess"].as_array().unwrap().len(), 1);
    assert_eq!(diff["excess"][0]["action_id"], "tj-actions/changed-files");
    assert_eq!(diff["excess"][0]["scopes"][0]["scope"], "pull-requests");
    assert_eq!(diff["under_declared"][0]["action_id"], "actions/checkout");
}

#[test]
fn ca_writes_pem_files() {
    let dir = tempfile::tempdir().unwrap();
    let (cert, key) = (dir.path().join("ca.pem"), dir.path().join("ca.key"));
    let out = run(bin().args(["ca", "--cert"]).arg(&cert).arg("--key").arg(&key));
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&cert).unwrap().starts_with("-----BEGIN CERTIFICATE-----"));
    assert!(std::fs::read_to_string(&key).unwrap().contains("PRIVATE KEY"));
}

fn knowledge_dir(dir: &Path) -> PathBuf {
    let kb = dir.join("knowledge");
    std::fs::create_dir(&kb).unwrap();
    std::fs::write(
        kb.join("tj-actions%2Fchanged-files.json"),
        r#"{"tj-actions/changed-files": {"pull-requests": "read", "contents": "read"}}"#,
    )
    .unwrap();
    kb
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_and_proxy_processes_enforce_policies() {
    let dir = tempfile::tempdir().unwrap();
    let kb = knowledge_dir(dir.path());
    let fake = FakeApi::start().await;
    let (verifier_addr, proxy_addr) = (free_addr(), free_addr());
    let flows = dir.path().join("flows.jsonl");

    let _serve = Running::spawn(bin().args(["serve", "--listen", &verifier_addr.to_string(), "--knowledge"]).arg(&kb));
    wait_for_port(verifier_addr);
    let _proxy = Running::spawn(
        bin()
            .args(["proxy", "--listen", &proxy_addr.to_string()])
            .args(["--verifier", &verifier_addr.to_string()])
            .args(["--upstream", &fake.addr().to_string()])
            .args(["--action-id", "tj-actions/changed-files"])
            .arg("--flow-log")
            .arg(&flows),
    );
    wait_for_port(proxy_addr);

    let client = reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(format!("http://{proxy_addr}")).unwrap())
        .build()
        .unwrap();
    let ok = client.get("http://api.github.com/repos/o/r/pulls").send().await.unwrap();
    assert_eq!(ok.status(), 200);
    let denied = client
        .post("http://api.github.com/repos/o/r/pulls/1/reviews")
        .send()
        .await
        .unwrap();
    assert_eq!(denied.status(), 403);
    assert_eq!(fake.hits().len(), 1);

    let records: Vec<Value> = std::fs::read_to_string(&flows)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["status"], 403);
    assert_eq!(records[1]["decision"]["scope"], "pull-requests");
}

#[tokio::test(flavor = "multi_thread")]
async fn learning_proxy_writes_policies_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let learned = dir.path().join("learned");
    let fake = FakeApi::start().await;
    let proxy_addr = free_addr();
    let proxy = Running::spawn(
        bin()
            .args(["proxy", "--mode", "learn", "--listen", &proxy_addr.to_string()])
            .args(["--upstream", &fake.addr().to_string()])
            .arg("--knowledge")
            .arg(&learned),
    );
    wait_for_port(proxy_addr);

    let client = reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(format!("http://{proxy_addr}")).unwrap())
        .build()
        .unwrap();
    for (action, method, path) in [
        ("actions/checkout", "GET", "/repos/o/r/contents/README.md"),
        ("reviewdog/action-markdownlint", "POST", "/repos/o/r/pulls/4/reviews"),
    ] {
        let resp = client
            .request(method.parse().unwrap(), format!("http://api.github.com{path}"))
            .header("x-stepguard-action", action)
            .send()
            .await
            .unwrap();
        assert!(resp.status().is_success());
    }
    drop(client);

    assert!(proxy.interrupt().success());
    let kb = load_knowledge(&learned, LoadOptions::default()).unwrap();
    assert_eq!(kb.len(), 2);
    let markdownlint = kb.lookup("reviewdog/action-markdownlint").unwrap().permissions;
    assert_eq!(markdownlint.get(PermissionScope::PullRequests), stepguard_core::AccessLevel::Write);
}
