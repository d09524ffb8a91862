//! Step-level policies and the knowledge directory.
//!
//! A policy file holds one action:
//!
//! ```json
//! { "create-an-issue": { "issues": "write", "pull-requests": "write" } }
//! ```
//!
//! The file stem is the percent-encoded canonical action id, so
//! `tj-actions/changed-files` is stored as `tj-actions%2Fchanged-files.json`.
//! The key inside the document must name the same action as the file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{PermissionError, PolicyError};
use crate::permission::{AccessLevel, PermissionScope, PermissionSet};

const POLICY_EXTENSION: &str = "json";

/// Bytes escaped in policy file stems.
const FILE_STEM_ESCAPES: &AsciiSet = &CONTROLS
    .add(b'%')
    .add(b'/')
    .add(b'\\')
    .add(b':')
    .add(b'*')
    .add(b'?')
    .add(b'"')
    .add(b'<')
    .add(b'>')
    .add(b'|');

/// Splits `owner/name@v4` into the action and its version tag.
pub fn split_version(raw: &str) -> (&str, Option<&str>) {
    let raw = raw.trim();
    match raw.rsplit_once('@') {
        Some((name, version)) => (name, Some(version)),
        None => (raw, None),
    }
}

/// Case-folds and drops the `@version` suffix. Policies apply per action, not per version.
pub fn canonical_action_id(raw: &str) -> String {
    split_version(raw).0.to_lowercase()
}

/// File stem for a canonical action id.
pub fn encode_action_id(action_id: &str) -> String {
    utf8_percent_encode(action_id, FILE_STEM_ESCAPES).to_string()
}

pub fn decode_action_id(stem: &str) -> Option<String> {
    percent_decode_str(stem).decode_utf8().ok().map(|s| s.into_owned())
}

pub fn policy_file_name(action_id: &str) -> String {
    format!("{}.{POLICY_EXTENSION}", encode_action_id(&canonical_action_id(action_id)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub action_id: String,
    pub permissions: PermissionSet,
}

impl StepPolicy {
    /// Canonicalizes `action_id`; fails when it is empty after canonicalization.
    pub fn new(action_id: &str, permissions: PermissionSet) -> Result<Self, PolicyError> {
        let action_id = canonical_action_id(action_id);
        if action_id.is_empty() {
            return Err(PolicyError::InvalidActionId(action_id));
        }
        Ok(StepPolicy {
            action_id,
            permissions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    RuntimeLearned,
    StaticDeclared,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    policies: BTreeMap<String, StepPolicy>,
    provenance: Provenance,
}

impl KnowledgeBase {
    pub fn new(provenance: Provenance) -> Self {
        KnowledgeBase {
            policies: BTreeMap::new(),
            provenance,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Adds a policy; an existing entry for the same canonical id is an error.
    pub fn insert(&mut self, policy: StepPolicy) -> Result<(), StepPolicy> {
        if self.policies.contains_key(&policy.action_id) {
            return Err(policy);
        }
        self.policies.insert(policy.action_id.clone(), policy);
        Ok(())
    }

    /// Adds or replaces a policy.
    pub fn upsert(&mut self, policy: StepPolicy) {
        self.policies.insert(policy.action_id.clone(), policy);
    }

    pub fn with_policy(mut self, action_id: &str, permissions: PermissionSet) -> Self {
        let policy = StepPolicy::new(action_id, permissions).expect("non-empty action id");
        self.upsert(policy);
        self
    }

    pub fn lookup(&self, action_id: &str) -> Option<&StepPolicy> {
        self.policies.get(&canonical_action_id(action_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &StepPolicy> {
        self.policies.values()
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Loads either a knowledge directory or a consolidated static document.
    pub fn load_path(path: &Path, options: LoadOptions) -> Result<Self, PolicyError> {
        if path.is_dir() {
            load_knowledge(path, options)
        } else {
            load_static(path, options)
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept bare `read`/`write`/`none` tokens and trailing commas.
    pub lenient: bool,
}

fn lenient_fixups(source: &str) -> String {
    static BARE_LEVEL: OnceLock<Regex> = OnceLock::new();
    static TRAILING_COMMA: OnceLock<Regex> = OnceLock::new();
    let bare = BARE_LEVEL.get_or_init(|| Regex::new(r#"(:\s*)(read|write|none)(\s*[,}\r\n])"#).unwrap());
    let trailing = TRAILING_COMMA.get_or_init(|| Regex::new(r",(\s*[}\]])").unwrap());
    let quoted = bare.replace_all(source, "$1\"$2\"$3");
    trailing.replace_all(&quoted, "$1").into_owned()
}

fn parse_document(path: &Path, source: &str, options: LoadOptions) -> Result<serde_json::Map<String, serde_json::Value>, PolicyError> {
    let fixed;
    let source = if options.lenient {
        fixed = lenient_fixups(source);
        fixed.as_str()
    } else {
        source
    };
    let value: serde_json::Value = serde_json::from_str(source).map_err(|e| PolicyError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match value {
        serde_json::Value::Object(map) => Ok(map),
        _ => Err(PolicyError::Malformed {
            path: path.to_path_buf(),
            message: "top level must be an object keyed by action id".to_string(),
        }),
    }
}

fn parse_permissions(path: &Path, action_id: &str, body: &serde_json::Value) -> Result<PermissionSet, PolicyError> {
    let serde_json::Value::Object(entries) = body else {
        return Err(PolicyError::Malformed {
            path: path.to_path_buf(),
            message: format!("permissions of `{action_id}` must be an object"),
        });
    };
    let mut set = PermissionSet::none();
    for (field, level) in entries {
        let invalid = |source: PermissionError| PolicyError::Invalid {
            path: path.to_path_buf(),
            field: field.clone(),
            source,
        };
        let scope: PermissionScope = field.parse().map_err(invalid)?;
        let level: AccessLevel = match level {
            serde_json::Value::String(s) => s.parse().map_err(invalid)?,
            other => return Err(invalid(PermissionError::UnknownLevel(other.to_string()))),
        };
        set.try_set(scope, level).map_err(invalid)?;
    }
    Ok(set)
}

/// Reads one policy file.
pub fn load_policy_file(path: &Path, options: LoadOptions) -> Result<StepPolicy, PolicyError> {
    let source = fs::read_to_string(path).map_err(|source| PolicyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc = parse_document(path, &source, options)?;
    let mut entries = doc.into_iter();
    let (key, body) = match (entries.next(), entries.next()) {
        (Some(entry), None) => entry,
        _ => {
            return Err(PolicyError::Malformed {
                path: path.to_path_buf(),
                message: "a policy file must declare exactly one action".to_string(),
            })
        }
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(decode_action_id)
        .unwrap_or_default();
    if canonical_action_id(&key) != canonical_action_id(&stem) {
        return Err(PolicyError::KeyMismatch {
            path: path.to_path_buf(),
            key,
            stem,
        });
    }
    let permissions = parse_permissions(path, &key, &body)?;
    StepPolicy::new(&key, permissions)
}

/// Loads every `*.json` policy in `dir`. Unspecified scopes are `none`.
pub fn load_knowledge(dir: &Path, options: LoadOptions) -> Result<KnowledgeBase, PolicyError> {
    let io_err = |source| PolicyError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == POLICY_EXTENSION));
    paths.sort();

    let mut kb = KnowledgeBase::new(Provenance::RuntimeLearned);
    for path in paths {
        let policy = load_policy_file(&path, options)?;
        if let Err(dup) = kb.insert(policy) {
            return Err(PolicyError::Duplicate {
                path,
                action_id: dup.action_id,
            });
        }
    }
    Ok(kb)
}

/// Loads a consolidated document mapping many action ids to permissions.
pub fn load_static(path: &Path, options: LoadOptions) -> Result<KnowledgeBase, PolicyError> {
    let source = fs::read_to_string(path).map_err(|source| PolicyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc = parse_document(path, &source, options)?;
    let mut kb = KnowledgeBase::new(Provenance::StaticDeclared);
    for (key, body) in &doc {
        let permissions = parse_permissions(path, key, body)?;
        let policy = StepPolicy::new(key, permissions)?;
        if let Err(dup) = kb.insert(policy) {
            return Err(PolicyError::Duplicate {
                path: path.to_path_buf(),
                action_id: dup.action_id,
            });
        }
    }
    Ok(kb)
}

/// Writes `policy` into `dir`, replacing any previous file for the action
/// via write-to-temp then rename.
pub fn save_policy(dir: &Path, policy: &StepPolicy) -> Result<PathBuf, PolicyError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);

    let action_id = canonical_action_id(&policy.action_id);
    if action_id.is_empty() {
        return Err(PolicyError::InvalidActionId(policy.action_id.clone()));
    }
    let target = dir.join(policy_file_name(&action_id));
    let doc = BTreeMap::from([(action_id.as_str(), &policy.permissions)]);
    let mut body = serde_json::to_vec_pretty(&doc).expect("policy serializes");
    body.push(b'\n');

    let tmp = dir.join(format!(
        ".{}.{}-{}.tmp",
        encode_action_id(&action_id),
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PolicyError::Io { path, source }
    };
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(&body).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, &target).map_err(io_err(&target))?;
    Ok(target)
}
