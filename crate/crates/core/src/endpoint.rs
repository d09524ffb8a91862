//! Inference of the permission an API request needs.
//!
//! Lookup runs in two stages. A segment trie of well-known endpoints is tried
//! first; literal segments take precedence over `{placeholder}` segments at
//! every depth, backtracking when a literal branch dead-ends. When the trie
//! has no entry for the (path, method) pair, coarse pattern rules pick a scope
//! from the resource family and a discriminating segment, and derive the level
//! from the method.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use crate::error::EndpointMapError;
use crate::permission::{AccessLevel, PermissionScope};

pub const DEFAULT_API_HOST: &str = "api.github.com";

const SEED_MAP: &str = include_str!("../data/endpoints.json");

/// A normalized outgoing request, attributed to the step's action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestDescriptor {
    method: String,
    host: String,
    path: String,
    action_id: String,
}

impl RequestDescriptor {
    /// Uppercases the method, lowercases the host and drops any port, and strips
    /// query and fragment from the path.
    pub fn new(
        method: impl AsRef<str>,
        host: impl AsRef<str>,
        path: impl AsRef<str>,
        action_id: impl Into<String>,
    ) -> Self {
        let host = host.as_ref().trim().to_ascii_lowercase();
        let host = strip_port(&host).to_string();
        let path = path.as_ref();
        let path = path.split(['?', '#']).next().unwrap_or_default();
        let path = if path.starts_with('/') {
            path.to_string()
        } else {
            format!("/{path}")
        };
        RequestDescriptor {
            method: method.as_ref().trim().to_ascii_uppercase(),
            host,
            path,
            action_id: action_id.into(),
        }
    }

    /// Builds a descriptor from a full URL. A missing scheme is read as https.
    pub fn from_url(
        method: impl AsRef<str>,
        url: &str,
        action_id: impl Into<String>,
    ) -> Result<Self, url::ParseError> {
        let parsed = match url::Url::parse(url) {
            Ok(u) if u.has_host() => u,
            Ok(_) | Err(url::ParseError::RelativeUrlWithoutBase) => {
                url::Url::parse(&format!("https://{url}"))?
            }
            Err(e) => return Err(e),
        };
        let host = parsed.host_str().ok_or(url::ParseError::EmptyHost)?;
        Ok(RequestDescriptor::new(method, host, parsed.path(), action_id))
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn action_id(&self) -> &str {
        &self.action_id
    }
}

fn strip_port(host: &str) -> &str {
    if let Some(rest) = host.strip_prefix('[') {
        // [v6]:port
        return rest.split(']').next().unwrap_or(rest);
    }
    match host.rsplit_once(':') {
        Some((name, port)) if !name.contains(':') && port.chars().all(|c| c.is_ascii_digit()) => name,
        _ => host,
    }
}

/// Why an API request could not be mapped to a scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownKind {
    Unmapped,
    /// The GraphQL endpoint; only REST paths are inferred.
    Graphql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum InferredPermission {
    Known {
        scope: PermissionScope,
        level: AccessLevel,
    },
    Unknown {
        kind: UnknownKind,
    },
    NotApi,
}

impl InferredPermission {
    pub const UNMAPPED: InferredPermission = InferredPermission::Unknown {
        kind: UnknownKind::Unmapped,
    };

    pub fn known(&self) -> Option<(PermissionScope, AccessLevel)> {
        match *self {
            InferredPermission::Known { scope, level } => Some((scope, level)),
            _ => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, InferredPermission::Unknown { .. })
    }
}

impl fmt::Display for InferredPermission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferredPermission::Known { scope, level } => write!(f, "{scope}:{level}"),
            InferredPermission::Unknown { kind: UnknownKind::Unmapped } => f.write_str("unknown"),
            InferredPermission::Unknown { kind: UnknownKind::Graphql } => f.write_str("unknown (graphql)"),
            InferredPermission::NotApi => f.write_str("not-api"),
        }
    }
}

/// Splits a request path into matchable segments: empty segments (from
/// duplicate or trailing slashes) are dropped and each segment is
/// percent-decoded. A segment that does not decode to UTF-8 is kept raw.
pub fn normalize_segments(path: &str) -> Vec<String> {
    path.split('/')
        .filter(|s| !s.is_empty())
        .map(|s| match percent_decode_str(s).decode_utf8() {
            Ok(decoded) => decoded.into_owned(),
            Err(_) => s.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternSegment {
    Literal(String),
    Placeholder(String),
}

impl PatternSegment {
    pub fn matches(&self, segment: &str) -> bool {
        match self {
            PatternSegment::Literal(lit) => lit == segment,
            PatternSegment::Placeholder(_) => !segment.is_empty(),
        }
    }
}

/// One record of an endpoint-map document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointRecord {
    pub method: String,
    pub path_pattern: String,
    pub scope: PermissionScope,
    pub level: AccessLevel,
}

/// A validated trie entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointEntry {
    pub method: String,
    pub path_pattern: String,
    pub segments: Vec<PatternSegment>,
    pub scope: PermissionScope,
    pub level: AccessLevel,
}

impl EndpointEntry {
    fn from_record(index: usize, record: EndpointRecord) -> Result<Self, EndpointMapError> {
        let format = |message: String| EndpointMapError::Format { index, message };
        let method = record.method.trim();
        if method.is_empty() || !method.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(format(format!("method `{}` must be an uppercase token", record.method)));
        }
        if record.level == AccessLevel::None {
            return Err(format("level must be read or write".to_string()));
        }
        if !record.scope.admits(record.level) {
            return Err(format(format!("scope `{}` cannot be `{}`", record.scope, record.level)));
        }
        let segments = parse_pattern(&record.path_pattern).map_err(format)?;
        Ok(EndpointEntry {
            method: method.to_string(),
            path_pattern: record.path_pattern,
            segments,
            scope: record.scope,
            level: record.level,
        })
    }

    /// Pattern with placeholder names erased, for duplicate detection.
    fn shape(&self) -> Vec<Option<&str>> {
        self.segments
            .iter()
            .map(|s| match s {
                PatternSegment::Literal(l) => Some(l.as_str()),
                PatternSegment::Placeholder(_) => None,
            })
            .collect()
    }
}

fn parse_pattern(pattern: &str) -> Result<Vec<PatternSegment>, String> {
    let Some(rest) = pattern.strip_prefix('/') else {
        return Err(format!("path pattern `{pattern}` must start with `/`"));
    };
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    let rest = rest.strip_suffix('/').unwrap_or(rest);
    rest.split('/')
        .map(|seg| {
            if seg.is_empty() {
                return Err(format!("path pattern `{pattern}` has an empty segment"));
            }
            if let Some(inner) = seg.strip_prefix('{') {
                let name = inner
                    .strip_suffix('}')
                    .ok_or_else(|| format!("unterminated placeholder `{seg}`"))?;
                if name.is_empty() || name.contains(['{', '}']) {
                    return Err(format!("bad placeholder `{seg}`"));
                }
                Ok(PatternSegment::Placeholder(name.to_string()))
            } else if seg.contains(['{', '}']) {
                Err(format!("bad placeholder `{seg}`"))
            } else {
                Ok(PatternSegment::Literal(seg.to_string()))
            }
        })
        .collect()
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    literals: HashMap<String, usize>,
    placeholder: Option<usize>,
    /// method -> entry index
    methods: HashMap<String, usize>,
}

#[derive(Debug, Clone)]
struct SegmentTrie {
    nodes: Vec<TrieNode>,
}

impl SegmentTrie {
    fn new() -> Self {
        SegmentTrie {
            nodes: vec![TrieNode::default()],
        }
    }

    fn insert(&mut self, entry: &EndpointEntry, index: usize) {
        let mut node = 0;
        for seg in &entry.segments {
            let next = match seg {
                PatternSegment::Literal(lit) => self.nodes[node].literals.get(lit).copied(),
                PatternSegment::Placeholder(_) => self.nodes[node].placeholder,
            };
            node = match next {
                Some(n) => n,
                None => {
                    let n = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    match seg {
                        PatternSegment::Literal(lit) => {
                            self.nodes[node].literals.insert(lit.clone(), n);
                        }
                        PatternSegment::Placeholder(_) => self.nodes[node].placeholder = Some(n),
                    }
                    n
                }
            };
        }
        self.nodes[node].methods.insert(entry.method.clone(), index);
    }

    fn find(&self, node: usize, segments: &[String], method: &str) -> Option<usize> {
        let current = &self.nodes[node];
        let Some((head, tail)) = segments.split_first() else {
            return current.methods.get(method).copied();
        };
        if let Some(&child) = current.literals.get(head) {
            if let Some(hit) = self.find(child, tail, method) {
                return Some(hit);
            }
        }
        match current.placeholder {
            Some(child) if !head.is_empty() => self.find(child, tail, method),
            _ => None,
        }
    }
}

/// Scope keyed by the discriminating segment of a resource path.
const SEGMENT_SCOPES: &[(&str, PermissionScope)] = &[
    ("pulls", PermissionScope::PullRequests),
    ("issues", PermissionScope::Issues),
    ("contents", PermissionScope::Contents),
    ("deployments", PermissionScope::Deployments),
    ("check-runs", PermissionScope::Checks),
    ("check-suites", PermissionScope::Checks),
    ("statuses", PermissionScope::Statuses),
    ("packages", PermissionScope::Packages),
    ("code-scanning", PermissionScope::SecurityEvents),
    ("actions", PermissionScope::Actions),
    ("pages", PermissionScope::Pages),
    ("discussions", PermissionScope::Discussions),
    ("attestations", PermissionScope::Attestations),
];

/// Level implied by the method when no special case applies.
pub fn level_for_method(method: &str) -> AccessLevel {
    match method {
        "GET" | "HEAD" => AccessLevel::Read,
        _ => AccessLevel::Write,
    }
}

fn pattern_rule_scope(segments: &[String]) -> Option<PermissionScope> {
    let discriminator = match segments.first().map(String::as_str)? {
        "repos" => segments.get(3)?,
        "orgs" | "users" => segments.get(2)?,
        "projects" => return Some(PermissionScope::RepositoryProjects),
        _ => return None,
    };
    SEGMENT_SCOPES
        .iter()
        .find(|(keyword, _)| keyword == discriminator)
        .map(|(_, scope)| *scope)
}

/// The special-case trie plus pattern rules.
#[derive(Debug, Clone)]
pub struct EndpointMap {
    api_hosts: BTreeSet<String>,
    entries: Vec<EndpointEntry>,
    trie: SegmentTrie,
}

impl Default for EndpointMap {
    fn default() -> Self {
        EndpointMap::from_entries(Vec::new())
    }
}

impl EndpointMap {
    fn from_entries(entries: Vec<EndpointEntry>) -> Self {
        let mut trie = SegmentTrie::new();
        for (i, entry) in entries.iter().enumerate() {
            trie.insert(entry, i);
        }
        EndpointMap {
            api_hosts: BTreeSet::from([DEFAULT_API_HOST.to_string()]),
            entries,
            trie,
        }
    }

    /// Parses an endpoint-map document: either a JSON array of records or one
    /// JSON record per line (blank lines and `#` comments ignored).
    pub fn load(source: &str) -> Result<Self, EndpointMapError> {
        let records = parse_records(source)?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(records.len());
        for (index, record) in records.into_iter().enumerate() {
            let entry = EndpointEntry::from_record(index, record)?;
            let key = (entry.method.clone(), entry.shape().iter().map(|s| s.map(str::to_string)).collect::<Vec<_>>());
            if !seen.insert(key) {
                return Err(EndpointMapError::Duplicate {
                    index,
                    method: entry.method,
                    pattern: entry.path_pattern,
                });
            }
            entries.push(entry);
        }
        Ok(EndpointMap::from_entries(entries))
    }

    /// The bundled map of well-known REST endpoints.
    pub fn seed() -> Self {
        EndpointMap::load(SEED_MAP).expect("bundled endpoint map is valid")
    }

    pub fn seed_document() -> &'static str {
        SEED_MAP
    }

    /// Replaces the set of hosts treated as the API.
    pub fn with_api_hosts<I, S>(mut self, hosts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.api_hosts = hosts
            .into_iter()
            .map(|h| strip_port(&h.as_ref().to_ascii_lowercase()).to_string())
            .collect();
        self
    }

    pub fn api_hosts(&self) -> impl Iterator<Item = &str> {
        self.api_hosts.iter().map(String::as_str)
    }

    pub fn is_api_host(&self, host: &str) -> bool {
        self.api_hosts.contains(host)
    }

    pub fn entries(&self) -> &[EndpointEntry] {
        &self.entries
    }

    /// Trie lookup only.
    pub fn lookup(&self, method: &str, segments: &[String]) -> Option<&EndpointEntry> {
        self.trie.find(0, segments, method).map(|i| &self.entries[i])
    }

    pub fn infer(&self, req: &RequestDescriptor) -> InferredPermission {
        if !self.is_api_host(req.host()) {
            return InferredPermission::NotApi;
        }
        let segments = normalize_segments(req.path());
        if segments.len() == 1 && segments[0] == "graphql" {
            return InferredPermission::Unknown {
                kind: UnknownKind::Graphql,
            };
        }
        if let Some(entry) = self.lookup(req.method(), &segments) {
            return InferredPermission::Known {
                scope: entry.scope,
                level: entry.level,
            };
        }
        match pattern_rule_scope(&segments) {
            Some(scope) => {
                let level = level_for_method(req.method());
                // id-token has no read level; a read on it cannot be expressed
                if scope.admits(level) {
                    InferredPermission::Known { scope, level }
                } else {
                    InferredPermission::UNMAPPED
                }
            }
            None => InferredPermission::UNMAPPED,
        }
    }
}

fn parse_records(source: &str) -> Result<Vec<EndpointRecord>, EndpointMapError> {
    let trimmed = source.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(source).map_err(|e| EndpointMapError::Format {
                index: 0,
                message: format!("not a JSON array of records: {e}"),
            })?;
        return values
            .into_iter()
            .enumerate()
            .map(|(index, v)| {
                serde_json::from_value(v).map_err(|e| EndpointMapError::Format {
                    index,
                    message: e.to_string(),
                })
            })
            .collect();
    }
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(index, line)| {
            serde_json::from_str(line).map_err(|e| EndpointMapError::Format {
                index,
                message: e.to_string(),
            })
        })
        .collect()
}
