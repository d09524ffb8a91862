//! Request verification against step policies, and runtime learning.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::endpoint::{EndpointMap, InferredPermission, RequestDescriptor, UnknownKind};
use crate::error::PolicyError;
use crate::permission::{level_allows, AccessLevel, PermissionScope, PermissionSet};
use crate::policy::{canonical_action_id, save_policy, split_version, KnowledgeBase, StepPolicy};

/// Action id assigned to traffic that carries no attribution. Never satisfied
/// by a policy.
pub const UNATTRIBUTED: &str = "unattributed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[serde(alias = "enforce")]
    Enforcement,
    #[serde(alias = "learn")]
    Learning,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Enforcement => "enforcement",
            Mode::Learning => "learning",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "enforce" | "enforcement" => Ok(Mode::Enforcement),
            "learn" | "learning" => Ok(Mode::Learning),
            other => Err(format!("unknown mode `{other}` (expected enforce or learn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    PolicySatisfied,
    PolicyInsufficient,
    NoPolicy,
    UnknownEndpoint,
    LearningModeAllow,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::PolicySatisfied => "policy-satisfied",
            Reason::PolicyInsufficient => "policy-insufficient",
            Reason::NoPolicy => "no-policy",
            Reason::UnknownEndpoint => "unknown-endpoint",
            Reason::LearningModeAllow => "learning-mode-allow",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: Reason,
    pub inferred: InferredPermission,
    pub action_id: String,
    /// Level the action's policy holds on the inferred scope, when a policy
    /// was consulted.
    pub granted: Option<AccessLevel>,
    pub timestamp: DateTime<Utc>,
}

impl Decision {
    pub fn allowed(&self) -> bool {
        self.verdict == Verdict::Allow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub mode: Mode,
    /// Enforcement only: allow requests whose endpoint cannot be inferred.
    pub allow_unknown: bool,
}

impl From<Mode> for VerifyOptions {
    fn from(mode: Mode) -> Self {
        VerifyOptions {
            mode,
            allow_unknown: false,
        }
    }
}

pub fn verify(req: &RequestDescriptor, kb: &KnowledgeBase, map: &EndpointMap, mode: Mode) -> Decision {
    verify_with(req, kb, map, mode.into())
}

pub fn verify_with(
    req: &RequestDescriptor,
    kb: &KnowledgeBase,
    map: &EndpointMap,
    options: VerifyOptions,
) -> Decision {
    let inferred = map.infer(req);
    let action_id = canonical_action_id(req.action_id());
    let decide = |verdict, reason, granted| Decision {
        verdict,
        reason,
        inferred,
        action_id: action_id.clone(),
        granted,
        timestamp: Utc::now(),
    };

    if options.mode == Mode::Learning {
        return decide(Verdict::Allow, Reason::LearningModeAllow, None);
    }
    let (scope, level) = match inferred {
        InferredPermission::NotApi => return decide(Verdict::Allow, Reason::PolicySatisfied, None),
        InferredPermission::Unknown { .. } if options.allow_unknown => {
            return decide(Verdict::Allow, Reason::UnknownEndpoint, None)
        }
        InferredPermission::Unknown { .. } => return decide(Verdict::Deny, Reason::UnknownEndpoint, None),
        InferredPermission::Known { scope, level } => (scope, level),
    };
    let policy = if action_id == UNATTRIBUTED {
        None
    } else {
        kb.lookup(&action_id)
    };
    match policy {
        None => decide(Verdict::Deny, Reason::NoPolicy, None),
        Some(policy) => {
            let granted = policy.permissions.get(scope);
            if level_allows(granted, level) {
                decide(Verdict::Allow, Reason::PolicySatisfied, Some(granted))
            } else {
                decide(Verdict::Deny, Reason::PolicyInsufficient, Some(granted))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub action_id: String,
    pub action_version: Option<String>,
    pub scope: PermissionScope,
    pub level: AccessLevel,
    pub method: String,
    pub path: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownRequest {
    pub action_id: String,
    pub kind: UnknownKind,
    pub method: String,
    pub host: String,
    pub path: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ObservationKey {
    action_id: String,
    scope: PermissionScope,
    level: AccessLevel,
    method: String,
    path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct UnknownKey {
    action_id: String,
    kind: UnknownKind,
    method: String,
    host: String,
    path: String,
}

#[derive(Debug, Default)]
struct ObservationTables {
    known: HashMap<ObservationKey, (Option<String>, u64)>,
    unknown: HashMap<UnknownKey, u64>,
}

/// Counts of inferred permissions per (action, scope, level, method, path),
/// plus a separate log of requests whose permission could not be inferred.
#[derive(Debug, Default)]
pub struct ObservationLog {
    tables: Mutex<ObservationTables>,
}

impl ObservationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the inference behind `decision`. Non-API traffic is ignored.
    pub fn record(&self, req: &RequestDescriptor, decision: &Decision) {
        let (name, version) = split_version(req.action_id().trim());
        let action_id = canonical_action_id(name);
        let mut tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        match decision.inferred {
            InferredPermission::Known { scope, level } => {
                let key = ObservationKey {
                    action_id,
                    scope,
                    level,
                    method: req.method().to_string(),
                    path: req.path().to_string(),
                };
                let slot = tables.known.entry(key).or_insert((None, 0));
                if let Some(v) = version {
                    slot.0 = Some(v.to_string());
                }
                slot.1 += 1;
            }
            InferredPermission::Unknown { kind } => {
                let key = UnknownKey {
                    action_id,
                    kind,
                    method: req.method().to_string(),
                    host: req.host().to_string(),
                    path: req.path().to_string(),
                };
                *tables.unknown.entry(key).or_insert(0) += 1;
            }
            InferredPermission::NotApi => {}
        }
    }

    /// Sorted by action, scope, level, method, path.
    pub fn observations(&self) -> Vec<Observation> {
        let tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<Observation> = tables
            .known
            .iter()
            .map(|(k, (version, count))| Observation {
                action_id: k.action_id.clone(),
                action_version: version.clone(),
                scope: k.scope,
                level: k.level,
                method: k.method.clone(),
                path: k.path.clone(),
                count: *count,
            })
            .collect();
        out.sort_by(|a, b| {
            (&a.action_id, a.scope, a.level, &a.method, &a.path).cmp(&(&b.action_id, b.scope, b.level, &b.method, &b.path))
        });
        out
    }

    pub fn unknown_requests(&self) -> Vec<UnknownRequest> {
        let tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<UnknownRequest> = tables
            .unknown
            .iter()
            .map(|(k, count)| UnknownRequest {
                action_id: k.action_id.clone(),
                kind: k.kind,
                method: k.method.clone(),
                host: k.host.clone(),
                path: k.path.clone(),
                count: *count,
            })
            .collect();
        out.sort_by(|a, b| (&a.action_id, &a.host, &a.path, &a.method).cmp(&(&b.action_id, &b.host, &b.path, &b.method)));
        out
    }

    /// Distinct observation keys.
    pub fn len(&self) -> usize {
        self.tables.lock().unwrap_or_else(|e| e.into_inner()).known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_count(&self) -> u64 {
        let tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        tables.known.values().map(|(_, c)| c).sum()
    }

    pub fn unknown_count(&self) -> u64 {
        let tables = self.tables.lock().unwrap_or_else(|e| e.into_inner());
        tables.unknown.values().sum()
    }
}

/// Per action, the least permission set covering every observation.
/// Unattributed traffic yields no policy.
pub fn derive_policies(log: &ObservationLog) -> Vec<StepPolicy> {
    let mut sets: BTreeMap<String, PermissionSet> = BTreeMap::new();
    for obs in log.observations() {
        if obs.action_id.is_empty() || obs.action_id == UNATTRIBUTED {
            continue;
        }
        let set = sets.entry(obs.action_id).or_insert_with(PermissionSet::none);
        if set.get(obs.scope) < obs.level {
            *set = set.with(obs.scope, obs.level);
        }
    }
    sets.into_iter()
        .filter_map(|(id, set)| StepPolicy::new(&id, set).ok())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct AuditRecord {
    pub timestamp: DateTime<Utc>,
    pub mode: Mode,
    pub action_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    pub method: String,
    pub host: String,
    pub path: String,
    pub verdict: Verdict,
    pub reason: Reason,
    pub inferred: InferredPermission,
    pub granted: Option<AccessLevel>,
}

/// Append-only JSON-lines decision log.
pub struct AuditLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuditLog").finish_non_exhaustive()
    }
}

impl AuditLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::to_writer(file))
    }

    pub fn to_writer(writer: impl Write + Send + 'static) -> Self {
        AuditLog {
            sink: Mutex::new(Box::new(writer)),
        }
    }

    pub fn append(&self, record: &AuditRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        sink.write_all(&line)?;
        sink.flush()
    }
}

#[derive(Debug, Default)]
struct Counters {
    total: AtomicU64,
    allowed: AtomicU64,
    denied: AtomicU64,
    not_api: AtomicU64,
    unknown: AtomicU64,
    graphql: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierStats {
    pub mode: Mode,
    pub total: u64,
    pub allowed: u64,
    pub denied: u64,
    pub not_api: u64,
    pub unknown: u64,
    pub graphql: u64,
    pub policies: usize,
}

/// A verification session: fixed mode, swappable knowledge base, and in
/// Learning mode an observation log.
#[derive(Debug)]
pub struct Verifier {
    options: VerifyOptions,
    map: Arc<EndpointMap>,
    kb: RwLock<Arc<KnowledgeBase>>,
    observations: ObservationLog,
    audit: Option<AuditLog>,
    counters: Counters,
}

impl Verifier {
    pub fn new(kb: KnowledgeBase, map: EndpointMap, options: VerifyOptions) -> Self {
        Verifier {
            options,
            map: Arc::new(map),
            kb: RwLock::new(Arc::new(kb)),
            observations: ObservationLog::new(),
            audit: None,
            counters: Counters::default(),
        }
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn mode(&self) -> Mode {
        self.options.mode
    }

    pub fn options(&self) -> VerifyOptions {
        self.options
    }

    pub fn map(&self) -> &EndpointMap {
        &self.map
    }

    pub fn knowledge(&self) -> Arc<KnowledgeBase> {
        self.kb.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces the knowledge base for subsequent checks.
    pub fn set_knowledge(&self, kb: KnowledgeBase) {
        *self.kb.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(kb);
    }

    pub fn observations(&self) -> &ObservationLog {
        &self.observations
    }

    /// Verifies, records (Learning mode), audits and counts one request.
    pub fn check(&self, req: &RequestDescriptor, step_index: Option<u32>) -> Decision {
        let kb = self.knowledge();
        let decision = verify_with(req, &kb, &self.map, self.options);

        if self.options.mode == Mode::Learning {
            self.observations.record(req, &decision);
        }

        let c = &self.counters;
        c.total.fetch_add(1, Ordering::Relaxed);
        match decision.verdict {
            Verdict::Allow => c.allowed.fetch_add(1, Ordering::Relaxed),
            Verdict::Deny => c.denied.fetch_add(1, Ordering::Relaxed),
        };
        match decision.inferred {
            InferredPermission::NotApi => {
                c.not_api.fetch_add(1, Ordering::Relaxed);
            }
            InferredPermission::Unknown { kind } => {
                c.unknown.fetch_add(1, Ordering::Relaxed);
                if kind == UnknownKind::Graphql {
                    c.graphql.fetch_add(1, Ordering::Relaxed);
                }
                if decision.allowed() && self.options.mode == Mode::Enforcement {
                    tracing::warn!(action = %decision.action_id, method = req.method(), path = req.path(), "allowing request to unknown endpoint");
                }
            }
            InferredPermission::Known { .. } => {}
        }

        if let Some(audit) = &self.audit {
            let record = AuditRecord {
                timestamp: decision.timestamp,
                mode: self.options.mode,
                action_id: decision.action_id.clone(),
                step_index,
                method: req.method().to_string(),
                host: req.host().to_string(),
                path: req.path().to_string(),
                verdict: decision.verdict,
                reason: decision.reason,
                inferred: decision.inferred,
                granted: decision.granted,
            };
            if let Err(e) = audit.append(&record) {
                tracing::error!(error = %e, "failed to append audit record");
            }
        }
        decision
    }

    pub fn stats(&self) -> VerifierStats {
        let c = &self.counters;
        VerifierStats {
            mode: self.options.mode,
            total: c.total.load(Ordering::Relaxed),
            allowed: c.allowed.load(Ordering::Relaxed),
            denied: c.denied.load(Ordering::Relaxed),
            not_api: c.not_api.load(Ordering::Relaxed),
            unknown: c.unknown.load(Ordering::Relaxed),
            graphql: c.graphql.load(Ordering::Relaxed),
            policies: self.knowledge().len(),
        }
    }

    pub fn derived_policies(&self) -> Vec<StepPolicy> {
        derive_policies(&self.observations)
    }

    /// Writes each derived policy, widened by the action's existing policy
    /// if any, into `dir`. Returns the written paths.
    pub fn flush_learned(&self, dir: &Path) -> Result<Vec<PathBuf>, PolicyError> {
        let kb = self.knowledge();
        self.derived_policies()
            .into_iter()
            .map(|mut policy| {
                if let Some(existing) = kb.lookup(&policy.action_id) {
                    policy.permissions = policy.permissions.union(&existing.permissions);
                }
                save_policy(dir, &policy)
            })
            .collect()
    }
}

/// Body of `POST /v1/verify`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub action_id: String,
    pub method: String,
    pub url: String,
    /// Position of the step in its job, for the audit log only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
}

/// Response of `POST /v1/verify`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub allow: bool,
    pub reason: Reason,
    pub scope: Option<PermissionScope>,
    pub level: Option<AccessLevel>,
    #[serde(default)]
    pub granted: Option<AccessLevel>,
}

impl From<&Decision> for VerifyResponse {
    fn from(d: &Decision) -> Self {
        let (scope, level) = d.inferred.known().unzip();
        VerifyResponse {
            allow: d.allowed(),
            reason: d.reason,
            scope,
            level,
            granted: d.granted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permission::PermissionScope::*;
    use AccessLevel::{Read, Write};

    fn kb() -> KnowledgeBase {
        KnowledgeBase::new(crate::policy::Provenance::StaticDeclared).with_policy(
            "tj-actions/changed-files",
            PermissionSet::none().with(PullRequests, Read).with(Contents, Read),
        )
    }

    fn req(method: &str, path: &str, action: &str) -> RequestDescriptor {
        RequestDescriptor::new(method, "api.github.com", path, action)
    }

    #[test]
    fn blocks_review_write_under_read_policy() {
        let map = EndpointMap::seed();
        let d = verify(&req("POST", "/repos/o/r/pulls/7/reviews", "tj-actions/changed-files@v47"), &kb(), &map, Mode::Enforcement);
        assert_eq!((d.verdict, d.reason), (Verdict::Deny, Reason::PolicyInsufficient));
        assert_eq!(d.inferred.known(), Some((PullRequests, Write)));
        assert_eq!(d.granted, Some(Read));

        let write = KnowledgeBase::new(crate::policy::Provenance::StaticDeclared)
            .with_policy("tj-actions/changed-files", PermissionSet::none().with(PullRequests, Write));
        let d = verify(&req("POST", "/repos/o/r/pulls/7/reviews", "tj-actions/changed-files"), &write, &map, Mode::Enforcement);
        assert_eq!((d.verdict, d.reason), (Verdict::Allow, Reason::PolicySatisfied));
    }

    #[test]
    fn enforcement_outcomes() {
        let map = EndpointMap::seed();
        let unknown = verify(&req("GET", "/unmapped/xyz", "tj-actions/changed-files"), &kb(), &map, Mode::Enforcement);
        assert_eq!((unknown.verdict, unknown.reason), (Verdict::Deny, Reason::UnknownEndpoint));

        let relaxed = verify_with(
            &req("GET", "/unmapped/xyz", "tj-actions/changed-files"),
            &kb(),
            &map,
            VerifyOptions { mode: Mode::Enforcement, allow_unknown: true },
        );
        assert_eq!((relaxed.verdict, relaxed.reason), (Verdict::Allow, Reason::UnknownEndpoint));

        let no_policy = verify(&req("GET", "/repos/o/r/pulls", "someone/else"), &kb(), &map, Mode::Enforcement);
        assert_eq!((no_policy.verdict, no_policy.reason), (Verdict::Deny, Reason::NoPolicy));

        let off_api = RequestDescriptor::new("POST", "example.com", "/repos/o/r/pulls/7/reviews", "nobody");
        let d = verify(&off_api, &kb(), &map, Mode::Enforcement);
        assert_eq!((d.verdict, d.reason, d.inferred), (Verdict::Allow, Reason::PolicySatisfied, InferredPermission::NotApi));
    }

    #[test]
    fn unattributed_is_denied_even_with_a_policy() {
        let map = EndpointMap::seed();
        let kb = kb().with_policy(UNATTRIBUTED, PermissionSet::uniform(Write));
        let d = verify(&req("GET", "/repos/o/r/pulls", UNATTRIBUTED), &kb, &map, Mode::Enforcement);
        assert_eq!((d.verdict, d.reason), (Verdict::Deny, Reason::NoPolicy));
    }

    #[test]
    fn learning_allows_everything() {
        let map = EndpointMap::seed();
        for (m, p) in [("POST", "/repos/o/r/pulls/7/reviews"), ("GET", "/unmapped/xyz"), ("POST", "/graphql")] {
            let d = verify(&req(m, p, "nobody/none"), &KnowledgeBase::new(crate::policy::Provenance::RuntimeLearned), &map, Mode::Learning);
            assert_eq!((d.verdict, d.reason), (Verdict::Allow, Reason::LearningModeAllow));
        }
    }

    #[test]
    fn record_counts_and_separates_unknowns() {
        let map = EndpointMap::seed();
        let log = ObservationLog::new();
        let empty = KnowledgeBase::new(crate::policy::Provenance::RuntimeLearned);
        let trace = [
            ("GET", "/repos/o/r/pulls", "a/one@v1"),
            ("GET", "/repos/o/r/pulls", "a/one@v1"),
            ("GET", "/repos/o/r/contents/README.md", "a/one@v1"),
            ("POST", "/repos/o/r/issues", "b/two"),
            ("GET", "/nowhere", "b/two"),
        ];
        for (m, p, a) in trace {
            let r = req(m, p, a);
            log.record(&r, &verify(&r, &empty, &map, Mode::Learning));
        }
        assert_eq!(log.len(), 3);
        assert_eq!(log.total_count(), 4);
        assert_eq!(log.unknown_requests().len(), 1);
        let obs = log.observations();
        let pulls = obs.iter().find(|o| o.path == "/repos/o/r/pulls").unwrap();
        assert_eq!(pulls.count, 2);
        assert_eq!(pulls.action_id, "a/one");
        assert_eq!(pulls.action_version.as_deref(), Some("v1"));
    }

    #[test]
    fn derives_markdownlint_policies() {
        let map = EndpointMap::seed();
        let log = ObservationLog::new();
        let empty = KnowledgeBase::new(crate::policy::Provenance::RuntimeLearned);
        for (m, p, a) in [
            ("GET", "/repos/o/r/contents/README.md", "actions/checkout@v5"),
            ("GET", "/repos/o/r/pulls/7/files", "tj-actions/changed-files@v47"),
            ("POST", "/repos/o/r/pulls/7/reviews", "reviewdog/action-markdownlint@v0"),
            ("GET", "/repos/o/r/pulls/7", "reviewdog/action-markdownlint@v0"),
        ] {
            let r = req(m, p, a);
            log.record(&r, &verify(&r, &empty, &map, Mode::Learning));
        }
        let derived = derive_policies(&log);
        let expected = vec![
            StepPolicy::new("actions/checkout", PermissionSet::none().with(Contents, Read)).unwrap(),
            StepPolicy::new("reviewdog/action-markdownlint", PermissionSet::none().with(PullRequests, Write)).unwrap(),
            StepPolicy::new("tj-actions/changed-files", PermissionSet::none().with(PullRequests, Read)).unwrap(),
        ];
        assert_eq!(derived, expected);
        assert!(derive_policies(&ObservationLog::new()).is_empty());
    }

    #[test]
    fn verifier_flush_merges_existing_policy() {
        let dir = tempfile::tempdir().unwrap();
        let existing = KnowledgeBase::new(crate::policy::Provenance::RuntimeLearned)
            .with_policy("a/one", PermissionSet::none().with(Issues, Write));
        let v = Verifier::new(existing, EndpointMap::seed(), Mode::Learning.into());
        v.check(&req("GET", "/repos/o/r/pulls", "a/one@v2"), None);
        v.check(&req("GET", "/repos/o/r/pulls", UNATTRIBUTED), None);
        let written = v.flush_learned(dir.path()).unwrap();
        assert_eq!(written.len(), 1);
        let loaded = crate::policy::load_knowledge(dir.path(), Default::default()).unwrap();
        assert_eq!(
            loaded.lookup("a/one").unwrap().permissions,
            PermissionSet::none().with(Issues, Write).with(PullRequests, Read)
        );
    }

    #[test]
    fn verifier_audits_and_counts() {
        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl io::Write for Shared {
            fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> io::Result<()> {
                Ok(())
            }
        }
        let sink = Shared::default();
        let v = Verifier::new(kb(), EndpointMap::seed(), Mode::Enforcement.into())
            .with_audit(AuditLog::to_writer(sink.clone()));
        v.check(&req("GET", "/repos/o/r/pulls", "tj-actions/changed-files"), Some(1));
        v.check(&req("POST", "/graphql", "tj-actions/changed-files"), Some(1));
        let stats = v.stats();
        assert_eq!((stats.total, stats.allowed, stats.denied, stats.graphql), (2, 1, 1, 1));

        let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
        let records: Vec<AuditRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].step_index, Some(1));
        assert_eq!(records[1].reason, Reason::UnknownEndpoint);
    }

    #[test]
    fn wire_shapes() {
        let body: VerifyRequest =
            serde_json::from_str(r#"{"action_id":"a/b","method":"GET","url":"https://api.github.com/repos/o/r"}"#).unwrap();
        assert_eq!(body.step_index, None);
        assert!(serde_json::from_str::<VerifyRequest>(r#"{"action_id":"a","method":"GET"}"#).is_err());

        let d = verify(&req("POST", "/repos/o/r/pulls/7/reviews", "tj-actions/changed-files"), &kb(), &EndpointMap::seed(), Mode::Enforcement);
        let json = serde_json::to_value(VerifyResponse::from(&d)).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"allow": false, "reason": "policy-insufficient", "scope": "pull-requests", "level": "write", "granted": "read"})
        );
        let unknown = verify(&req("GET", "/x", "a"), &kb(), &EndpointMap::seed(), Mode::Enforcement);
        let json = serde_json::to_value(VerifyResponse::from(&unknown)).unwrap();
        assert_eq!(json["scope"], serde_json::Value::Null);
        assert_eq!(json["level"], serde_json::Value::Null);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("enforce".parse::<Mode>().unwrap(), Mode::Enforcement);
        assert_eq!("Learning".parse::<Mode>().unwrap(), Mode::Learning);
        assert!("audit".parse::<Mode>().is_err());
    }
}
