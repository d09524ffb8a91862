//! The GITHUB_TOKEN permission lattice.
//!
//! Fourteen scopes, each granted at `none < read < write`. A [`PermissionSet`]
//! is total over the scopes; anything not stated is `none`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PermissionError;

/// One of the fourteen repository content types guarded by the token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PermissionScope {
    Contents,
    Deployments,
    Packages,
    PullRequests,
    SecurityEvents,
    Actions,
    Checks,
    Statuses,
    Issues,
    RepositoryProjects,
    Attestations,
    IdToken,
    Discussions,
    Pages,
}

impl PermissionScope {
    pub const COUNT: usize = 14;

    pub const ALL: [PermissionScope; Self::COUNT] = [
        PermissionScope::Contents,
        PermissionScope::Deployments,
        PermissionScope::Packages,
        PermissionScope::PullRequests,
        PermissionScope::SecurityEvents,
        PermissionScope::Actions,
        PermissionScope::Checks,
        PermissionScope::Statuses,
        PermissionScope::Issues,
        PermissionScope::RepositoryProjects,
        PermissionScope::Attestations,
        PermissionScope::IdToken,
        PermissionScope::Discussions,
        PermissionScope::Pages,
    ];

    /// Canonical hyphenated spelling used in workflow and policy files.
    pub const fn as_str(self) -> &'static str {
        match self {
            PermissionScope::Contents => "contents",
            PermissionScope::Deployments => "deployments",
            PermissionScope::Packages => "packages",
            PermissionScope::PullRequests => "pull-requests",
            PermissionScope::SecurityEvents => "security-events",
            PermissionScope::Actions => "actions",
            PermissionScope::Checks => "checks",
            PermissionScope::Statuses => "statuses",
            PermissionScope::Issues => "issues",
            PermissionScope::RepositoryProjects => "repository-projects",
            PermissionScope::Attestations => "attestations",
            PermissionScope::IdToken => "id-token",
            PermissionScope::Discussions => "discussions",
            PermissionScope::Pages => "pages",
        }
    }

    const fn index(self) -> usize {
        self as usize
    }

    /// Whether `level` is a legal grant for this scope. `id-token` has no read level.
    pub fn admits(self, level: AccessLevel) -> bool {
        !(self == PermissionScope::IdToken && level == AccessLevel::Read)
    }
}

impl fmt::Display for PermissionScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PermissionScope {
    type Err = PermissionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PermissionScope::ALL
            .into_iter()
            .find(|scope| scope.as_str() == s)
            .ok_or_else(|| PermissionError::UnknownScope(s.to_string()))
    }
}

impl Serialize for PermissionScope {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PermissionScope {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Access level, totally ordered `None < Read < Write`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum AccessLevel {
    #[default]
    None,
    Read,
    Write,
}

impl AccessLevel {
    pub const ALL: [AccessLevel; 3] = [AccessLevel::None, AccessLevel::Read, AccessLevel::Write];

    pub const fn as_str(self) -> &'static str {
        match self {
            AccessLevel::None => "none",
            AccessLevel::Read => "read",
            AccessLevel::Write => "write",
        }
    }

    /// One step down the order; `None` stays `None`.
    pub fn lowered(self) -> AccessLevel {
        match self {
            AccessLevel::Write => AccessLevel::Read,
            AccessLevel::Read | AccessLevel::None => AccessLevel::None,
        }
    }
}

impl fmt::Display for AccessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessLevel {
    type Err = PermissionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AccessLevel::None),
            "read" => Ok(AccessLevel::Read),
            "write" => Ok(AccessLevel::Write),
            other => Err(PermissionError::UnknownLevel(other.to_string())),
        }
    }
}

impl Serialize for AccessLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AccessLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// True iff `granted` meets or exceeds `required`.
pub fn level_allows(granted: AccessLevel, required: AccessLevel) -> bool {
    granted >= required
}

/// A total mapping from every scope to an access level.
///
/// Stored dense. Serialized sparse: scopes at `none` are omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PermissionSet {
    levels: [AccessLevel; PermissionScope::COUNT],
}

impl PermissionSet {
    pub const fn none() -> Self {
        PermissionSet {
            levels: [AccessLevel::None; PermissionScope::COUNT],
        }
    }

    /// Every scope at `level`, clamping `id-token` to `none` when `level` is read.
    pub fn uniform(level: AccessLevel) -> Self {
        let mut set = PermissionSet::none();
        for scope in PermissionScope::ALL {
            if scope.admits(level) {
                set.levels[scope.index()] = level;
            }
        }
        set
    }

    /// Builds a set from a partial mapping; missing scopes are `none`.
    pub fn from_entries<I>(entries: I) -> Result<Self, PermissionError>
    where
        I: IntoIterator<Item = (PermissionScope, AccessLevel)>,
    {
        let mut set = PermissionSet::none();
        for (scope, level) in entries {
            set.try_set(scope, level)?;
        }
        Ok(set)
    }

    /// Parses string pairs, as found in workflow and policy documents.
    pub fn from_str_entries<'a, I>(entries: I) -> Result<Self, PermissionError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut set = PermissionSet::none();
        for (scope, level) in entries {
            set.try_set(scope.parse()?, level.parse()?)?;
        }
        Ok(set)
    }

    pub fn get(&self, scope: PermissionScope) -> AccessLevel {
        self.levels[scope.index()]
    }

    /// Sets a level, rejecting `id-token: read`.
    pub fn try_set(&mut self, scope: PermissionScope, level: AccessLevel) -> Result<(), PermissionError> {
        if !scope.admits(level) {
            return Err(PermissionError::InvalidLevelForScope { scope, level });
        }
        self.levels[scope.index()] = level;
        Ok(())
    }

    /// Like [`try_set`](Self::try_set) but for levels already known to be admissible.
    ///
    /// # Panics
    /// On `id-token: read`.
    pub fn with(mut self, scope: PermissionScope, level: AccessLevel) -> Self {
        self.try_set(scope, level)
            .expect("id-token cannot be granted read");
        self
    }

    pub fn is_none(&self) -> bool {
        self.levels.iter().all(|l| *l == AccessLevel::None)
    }

    pub fn has_write(&self) -> bool {
        self.levels.contains(&AccessLevel::Write)
    }

    /// Scopes whose level is above `none`, in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (PermissionScope, AccessLevel)> + '_ {
        PermissionScope::ALL
            .into_iter()
            .map(|scope| (scope, self.get(scope)))
            .filter(|(_, level)| *level != AccessLevel::None)
    }

    /// True iff every scope of `self` allows the same scope of `required`.
    pub fn allows(&self, required: &PermissionSet) -> bool {
        set_allows(self, required)
    }

    /// Pointwise maximum.
    pub fn union(&self, other: &PermissionSet) -> PermissionSet {
        union(self, other)
    }

    /// Scopes where `self` is strictly above `other`, with both levels.
    pub fn excess_over(&self, other: &PermissionSet) -> Vec<(PermissionScope, AccessLevel, AccessLevel)> {
        PermissionScope::ALL
            .into_iter()
            .filter(|scope| self.get(*scope) > other.get(*scope))
            .map(|scope| (scope, self.get(scope), other.get(scope)))
            .collect()
    }

    /// Sparse view: only scopes above `none`.
    pub fn to_sparse(&self) -> BTreeMap<PermissionScope, AccessLevel> {
        self.iter().collect()
    }
}

impl fmt::Display for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (scope, level)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{scope}: {level}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for PermissionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_sparse().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PermissionSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
        PermissionSet::from_str_entries(raw.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(D::Error::custom)
    }
}

/// True iff `granted` allows `required` at every scope.
pub fn set_allows(granted: &PermissionSet, required: &PermissionSet) -> bool {
    PermissionScope::ALL
        .into_iter()
        .all(|scope| level_allows(granted.get(scope), required.get(scope)))
}

pub fn union(a: &PermissionSet, b: &PermissionSet) -> PermissionSet {
    let mut out = PermissionSet::none();
    for scope in PermissionScope::ALL {
        out.levels[scope.index()] = a.get(scope).max(b.get(scope));
    }
    out
}

/// Risk grade of a granted (scope, level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
    NotApplicable,
}

impl Severity {
    pub const fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "Low",
            Severity::Medium => "Medium",
            Severity::High => "High",
            Severity::Critical => "Critical",
            Severity::NotApplicable => "NotApplicable",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Risk table: (read risk, write risk) per scope.
const fn risk_row(scope: PermissionScope) -> (Severity, Severity) {
    use PermissionScope::*;
    use Severity::*;
    match scope {
        Contents => (Low, Critical),
        Deployments => (Low, Critical),
        Packages => (Low, High),
        PullRequests => (Low, High),
        SecurityEvents => (Medium, High),
        Actions => (Low, High),
        Checks => (Low, Medium),
        Statuses => (Low, Medium),
        Issues => (Low, Low),
        RepositoryProjects => (Low, Low),
        Attestations => (Low, Medium),
        IdToken => (NotApplicable, Critical),
        Discussions => (Low, Low),
        Pages => (Low, Medium),
    }
}

/// Severity of holding `level` on `scope`. `level` must be read or write.
pub fn severity_of(scope: PermissionScope, level: AccessLevel) -> Result<Severity, PermissionError> {
    let (read, write) = risk_row(scope);
    match level {
        AccessLevel::Read => Ok(read),
        AccessLevel::Write => Ok(write),
        AccessLevel::None => Err(PermissionError::NoSeverityForNone(scope)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AccessLevel::{None as N, Read as R, Write as W};
    use PermissionScope::*;

    #[test]
    fn level_allows_examples() {
        assert!(level_allows(W, R));
        assert!(!level_allows(R, W));
        assert!(level_allows(N, N));
    }

    #[test]
    fn set_allows_examples() {
        let granted = PermissionSet::none().with(Contents, W);
        let required = PermissionSet::none().with(Contents, R);
        assert!(set_allows(&granted, &required));

        let granted = PermissionSet::none().with(Contents, R);
        let required = PermissionSet::none().with(Contents, R).with(Issues, R);
        assert!(!set_allows(&granted, &required));

        assert!(set_allows(&PermissionSet::none(), &PermissionSet::none()));
    }

    #[test]
    fn union_examples() {
        let a = PermissionSet::none().with(Contents, R);
        assert_eq!(a.union(&PermissionSet::none().with(Contents, W)), PermissionSet::none().with(Contents, W));
        assert_eq!(
            a.union(&PermissionSet::none().with(PullRequests, W)),
            PermissionSet::none().with(Contents, R).with(PullRequests, W)
        );

        // the three markdownlint steps
        let steps = [
            PermissionSet::none().with(Contents, R),
            PermissionSet::none().with(PullRequests, R),
            PermissionSet::none().with(PullRequests, W),
        ];
        let job = steps.iter().fold(PermissionSet::none(), |acc, s| acc.union(s));
        assert_eq!(job, PermissionSet::none().with(Contents, R).with(PullRequests, W));
    }

    #[test]
    fn severity_examples() {
        assert_eq!(severity_of(Contents, W).unwrap(), Severity::Critical);
        assert_eq!(severity_of(Issues, W).unwrap(), Severity::Low);
        assert_eq!(severity_of(IdToken, R).unwrap(), Severity::NotApplicable);
        assert!(matches!(severity_of(Contents, N), Err(PermissionError::NoSeverityForNone(Contents))));
    }

    #[test]
    fn scope_parsing_is_closed_and_case_sensitive() {
        for scope in PermissionScope::ALL {
            assert_eq!(scope.as_str().parse::<PermissionScope>().unwrap(), scope);
        }
        assert!("Pull-Requests".parse::<PermissionScope>().is_err());
        assert!("pull_requests".parse::<PermissionScope>().is_err());
        assert!("metadata".parse::<PermissionScope>().is_err());
        assert!("admin".parse::<AccessLevel>().is_err());
    }

    #[test]
    fn id_token_read_is_rejected() {
        let err = PermissionSet::from_str_entries([("id-token", "read")]).unwrap_err();
        assert!(matches!(err, PermissionError::InvalidLevelForScope { scope: IdToken, level: R }));
        assert!(PermissionSet::from_str_entries([("id-token", "write")]).is_ok());
        assert_eq!(PermissionSet::uniform(R).get(IdToken), N);
        assert_eq!(PermissionSet::uniform(W).get(IdToken), W);
    }

    #[test]
    fn sparse_serialization_omits_none() {
        let set = PermissionSet::none().with(Issues, W).with(PullRequests, W);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"{"pull-requests":"write","issues":"write"}"#);
        let back: PermissionSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        assert_eq!(serde_json::to_string(&PermissionSet::none()).unwrap(), "{}");
    }

    #[test]
    fn partial_mapping_fills_none() {
        let set = PermissionSet::from_str_entries([("contents", "read")]).unwrap();
        for scope in PermissionScope::ALL {
            let expected = if scope == Contents { R } else { N };
            assert_eq!(set.get(scope), expected);
        }
    }
}
