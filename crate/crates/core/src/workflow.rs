//! Workflow files: triggers, jobs, steps and declared permissions.
//!
//! Template expressions (`${{ ... }}`) in inputs and conditions are carried
//! as opaque text.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};
use walkdir::WalkDir;

use crate::error::{PermissionError, WorkflowError};
use crate::permission::{AccessLevel, PermissionSet};
use crate::policy::{canonical_action_id, split_version};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub name: Option<String>,
    pub triggers: Vec<String>,
    pub global_permissions: Option<PermissionSet>,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub name: Option<String>,
    pub declared_permissions: Option<PermissionSet>,
    pub needs: Vec<String>,
    pub condition: Option<String>,
    /// `strategy.matrix` is present; the job is still counted once.
    pub matrix: bool,
    /// The job is a job-level call of a reusable workflow; `steps` then holds
    /// that single call.
    pub reusable_call: bool,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub name: Option<String>,
    pub id: Option<String>,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepKind {
    Action {
        action: ActionRef,
        inputs: BTreeMap<String, String>,
    },
    Command {
        run: String,
    },
}

/// The target of a `uses:` key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRef {
    /// `owner/name[/path]`, a local `./path`, or a `docker://` reference.
    pub name: String,
    pub version: Option<String>,
    /// A reusable workflow rather than an action.
    pub workflow: bool,
}

impl ActionRef {
    pub fn parse(uses: &str) -> ActionRef {
        let uses = uses.trim();
        let (name, version) = if uses.starts_with("docker://") || uses.starts_with("./") {
            (uses, None)
        } else {
            split_version(uses)
        };
        let path = name.split('@').next().unwrap_or(name);
        let workflow = path.contains(".github/workflows/") && (path.ends_with(".yml") || path.ends_with(".yaml"));
        ActionRef {
            name: name.to_string(),
            version: version.map(str::to_string),
            workflow,
        }
    }

    pub fn is_local(&self) -> bool {
        self.name.starts_with("./")
    }

    /// Knowledge-base key for this action.
    pub fn action_id(&self) -> String {
        canonical_action_id(&self.name)
    }

    fn uses_text(&self) -> String {
        match &self.version {
            Some(v) => format!("{}@{v}", self.name),
            None => self.name.clone(),
        }
    }
}

impl Step {
    pub fn action(&self) -> Option<&ActionRef> {
        match &self.kind {
            StepKind::Action { action, .. } => Some(action),
            StepKind::Command { .. } => None,
        }
    }
}

/// Permissions a job runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", content = "permissions", rename_all = "kebab-case")]
pub enum EffectivePermissions {
    Declared(PermissionSet),
    /// No block at job or workflow level; the repository default applies.
    UnspecifiedDefault,
}

impl EffectivePermissions {
    pub fn resolve(&self, default: &PermissionSet) -> PermissionSet {
        match self {
            EffectivePermissions::Declared(set) => *set,
            EffectivePermissions::UnspecifiedDefault => *default,
        }
    }
}

impl Workflow {
    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs.iter().find(|j| j.id == id)
    }

    /// Job block if present, else the workflow block, else the unspecified default.
    pub fn effective_job_permissions(&self, job_id: &str) -> Result<EffectivePermissions, WorkflowError> {
        let job = self
            .job(job_id)
            .ok_or_else(|| WorkflowError::UnknownJob(job_id.to_string()))?;
        Ok(match (job.declared_permissions, self.global_permissions) {
            (Some(set), _) | (None, Some(set)) => EffectivePermissions::Declared(set),
            (None, None) => EffectivePermissions::UnspecifiedDefault,
        })
    }

    /// Renders the model back to workflow YAML. Keys the model does not carry
    /// (`runs-on`, `env`, ...) are not emitted.
    pub fn to_yaml(&self) -> String {
        let mut root = Mapping::new();
        if let Some(name) = &self.name {
            root.insert("name".into(), name.as_str().into());
        }
        root.insert(
            "on".into(),
            Value::Sequence(self.triggers.iter().map(|t| t.as_str().into()).collect()),
        );
        if let Some(p) = &self.global_permissions {
            root.insert("permissions".into(), permissions_value(p));
        }
        let mut jobs = Mapping::new();
        for job in &self.jobs {
            jobs.insert(job.id.as_str().into(), job_value(job));
        }
        root.insert("jobs".into(), Value::Mapping(jobs));
        serde_yaml::to_string(&Value::Mapping(root)).expect("workflow serializes")
    }
}

fn permissions_value(set: &PermissionSet) -> Value {
    let mut m = Mapping::new();
    for (scope, level) in set.iter() {
        m.insert(scope.as_str().into(), level.as_str().into());
    }
    Value::Mapping(m)
}

fn inputs_value(inputs: &BTreeMap<String, String>) -> Value {
    Value::Mapping(
        inputs
            .iter()
            .map(|(k, v)| (Value::from(k.as_str()), Value::from(v.as_str())))
            .collect(),
    )
}

fn job_value(job: &Job) -> Value {
    let mut m = Mapping::new();
    if let Some(name) = &job.name {
        m.insert("name".into(), name.as_str().into());
    }
    if let Some(p) = &job.declared_permissions {
        m.insert("permissions".into(), permissions_value(p));
    }
    if !job.needs.is_empty() {
        m.insert(
            "needs".into(),
            Value::Sequence(job.needs.iter().map(|n| n.as_str().into()).collect()),
        );
    }
    if let Some(cond) = &job.condition {
        m.insert("if".into(), cond.as_str().into());
    }
    if job.matrix {
        let mut strategy = Mapping::new();
        strategy.insert("matrix".into(), Value::Mapping(Mapping::new()));
        m.insert("strategy".into(), Value::Mapping(strategy));
    }
    if job.reusable_call {
        if let Some(StepKind::Action { action, inputs }) = job.steps.first().map(|s| &s.kind) {
            m.insert("uses".into(), action.uses_text().into());
            if !inputs.is_empty() {
                m.insert("with".into(), inputs_value(inputs));
            }
        }
        return Value::Mapping(m);
    }
    let steps = job
        .steps
        .iter()
        .map(|step| {
            let mut s = Mapping::new();
            if let Some(name) = &step.name {
                s.insert("name".into(), name.as_str().into());
            }
            if let Some(id) = &step.id {
                s.insert("id".into(), id.as_str().into());
            }
            match &step.kind {
                StepKind::Action { action, inputs } => {
                    s.insert("uses".into(), action.uses_text().into());
                    if !inputs.is_empty() {
                        s.insert("with".into(), inputs_value(inputs));
                    }
                }
                StepKind::Command { run } => {
                    s.insert("run".into(), run.as_str().into());
                }
            }
            Value::Mapping(s)
        })
        .collect();
    m.insert("steps".into(), Value::Sequence(steps));
    Value::Mapping(m)
}

/// Parses workflow text. Errors carry `<input>` as their path.
pub fn parse_workflow(source: &str) -> Result<Workflow, WorkflowError> {
    Parser::new(Path::new("<input>")).parse(source)
}

pub fn parse_workflow_file(path: &Path) -> Result<Workflow, WorkflowError> {
    let source = fs::read_to_string(path).map_err(|source| WorkflowError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Parser::new(path).parse(&source)
}

/// Every `*.yml`/`*.yaml` under `root` (or `root` itself when it is a file),
/// sorted by path, each with its parse outcome.
pub fn parse_workflow_tree(root: &Path) -> Vec<(PathBuf, Result<Workflow, WorkflowError>)> {
    let mut paths: Vec<PathBuf> = if root.is_file() {
        vec![root.to_path_buf()]
    } else {
        WalkDir::new(root)
            .follow_links(false)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| p.extension().is_some_and(|e| e == "yml" || e == "yaml"))
            .collect()
    };
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let parsed = parse_workflow_file(&p);
            (p, parsed)
        })
        .collect()
}

struct Parser<'a> {
    path: &'a Path,
}

impl<'a> Parser<'a> {
    fn new(path: &'a Path) -> Self {
        Parser { path }
    }

    fn invalid(&self, message: impl Into<String>) -> WorkflowError {
        WorkflowError::Invalid {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn permission_error(&self, context: String, source: PermissionError) -> WorkflowError {
        WorkflowError::Permission {
            path: self.path.to_path_buf(),
            context,
            source,
        }
    }

    fn parse(&self, source: &str) -> Result<Workflow, WorkflowError> {
        let doc: Value = serde_yaml::from_str(source).map_err(|e| {
            let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
            WorkflowError::Syntax {
                path: self.path.to_path_buf(),
                line,
                column,
                message: e.to_string(),
            }
        })?;
        let Value::Mapping(root) = doc else {
            return Err(self.invalid("workflow document must be a mapping"));
        };

        let name = root.get("name").map(scalar_text).transpose().map_err(|m| self.invalid(format!("name: {m}")))?;
        let triggers = self.triggers(root.get("on"))?;
        let global_permissions = root
            .get("permissions")
            .map(|v| self.permissions(v, "workflow permissions"))
            .transpose()?;

        let Some(Value::Mapping(jobs_map)) = root.get("jobs") else {
            return Err(self.invalid("`jobs` must be a mapping"));
        };
        let mut jobs = Vec::with_capacity(jobs_map.len());
        for (key, body) in jobs_map {
            let Value::String(id) = key else {
                return Err(self.invalid("job ids must be strings"));
            };
            jobs.push(self.job(id, body)?);
        }
        if jobs.is_empty() {
            return Err(self.invalid("workflow has no jobs"));
        }

        let mut ids = HashSet::new();
        for job in &jobs {
            if !ids.insert(job.id.as_str()) {
                return Err(self.invalid(format!("duplicate job id `{}`", job.id)));
            }
        }
        for job in &jobs {
            if let Some(missing) = job.needs.iter().find(|n| !ids.contains(n.as_str())) {
                return Err(self.invalid(format!("job `{}` needs unknown job `{missing}`", job.id)));
            }
        }

        Ok(Workflow {
            name,
            triggers,
            global_permissions,
            jobs,
        })
    }

    fn triggers(&self, on: Option<&Value>) -> Result<Vec<String>, WorkflowError> {
        let triggers: Vec<String> = match on {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Sequence(seq)) => seq
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(self.invalid("trigger names must be strings")),
                })
                .collect::<Result<_, _>>()?,
            Some(Value::Mapping(m)) => m
                .keys()
                .map(|k| match k {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(self.invalid("trigger names must be strings")),
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(self.invalid("`on` must be a string, list or mapping")),
            None => Vec::new(),
        };
        if triggers.is_empty() {
            return Err(self.invalid("workflow declares no trigger events"));
        }
        Ok(triggers)
    }

    fn permissions(&self, value: &Value, context: &str) -> Result<PermissionSet, WorkflowError> {
        match value {
            Value::String(s) if s == "read-all" => Ok(PermissionSet::uniform(AccessLevel::Read)),
            Value::String(s) if s == "write-all" => Ok(PermissionSet::uniform(AccessLevel::Write)),
            Value::Mapping(m) => {
                let mut set = PermissionSet::none();
                for (k, v) in m {
                    let (Value::String(scope), Value::String(level)) = (k, v) else {
                        return Err(self.invalid(format!("{context}: entries must be `scope: level` strings")));
                    };
                    let ctx = || format!("{context}: `{scope}: {level}`");
                    let scope = scope.parse().map_err(|e| self.permission_error(ctx(), e))?;
                    let level = level.parse().map_err(|e| self.permission_error(ctx(), e))?;
                    set.try_set(scope, level).map_err(|e| self.permission_error(ctx(), e))?;
                }
                Ok(set)
            }
            _ => Err(self.invalid(format!(
                "{context}: expected a mapping, `read-all` or `write-all`"
            ))),
        }
    }

    fn job(&self, id: &str, body: &Value) -> Result<Job, WorkflowError> {
        let Value::Mapping(m) = body else {
            return Err(self.invalid(format!("job `{id}` must be a mapping")));
        };
        let field = |key: &str| -> Result<Option<String>, WorkflowError> {
            m.get(key)
                .map(scalar_text)
                .transpose()
                .map_err(|msg| self.invalid(format!("job `{id}`: `{key}` {msg}")))
        };
        let name = field("name")?;
        let condition = field("if")?;
        let declared_permissions = m
            .get("permissions")
            .map(|v| self.permissions(v, &format!("job `{id}` permissions")))
            .transpose()?;
        let needs = match m.get("needs") {
            None => Vec::new(),
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Sequence(seq)) => seq
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(self.invalid(format!("job `{id}`: `needs` entries must be strings"))),
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(self.invalid(format!("job `{id}`: `needs` must be a string or list"))),
        };
        let matrix = matches!(m.get("strategy"), Some(Value::Mapping(s)) if s.contains_key("matrix"));

        let (steps, reusable_call) = match (m.get("steps"), m.get("uses")) {
            (Some(_), Some(_)) => {
                return Err(self.invalid(format!("job `{id}` has both `steps` and `uses`")));
            }
            (None, Some(uses)) => {
                let uses = scalar_text(uses).map_err(|msg| self.invalid(format!("job `{id}`: `uses` {msg}")))?;
                let inputs = self.inputs(id, m.get("with"))?;
                let step = Step {
                    name: None,
                    id: None,
                    kind: StepKind::Action {
                        action: ActionRef {
                            workflow: true,
                            ..ActionRef::parse(&uses)
                        },
                        inputs,
                    },
                };
                (vec![step], true)
            }
            (Some(Value::Sequence(seq)), None) => {
                let steps = seq
                    .iter()
                    .enumerate()
                    .map(|(i, s)| self.step(id, i, s))
                    .collect::<Result<Vec<_>, _>>()?;
                (steps, false)
            }
            (Some(_), None) => return Err(self.invalid(format!("job `{id}`: `steps` must be a list"))),
            (None, None) => return Err(self.invalid(format!("job `{id}` has no steps"))),
        };
        if steps.is_empty() {
            return Err(self.invalid(format!("job `{id}` has no steps")));
        }

        Ok(Job {
            id: id.to_string(),
            name,
            declared_permissions,
            needs,
            condition,
            matrix,
            reusable_call,
            steps,
        })
    }

    fn inputs(&self, job_id: &str, with: Option<&Value>) -> Result<BTreeMap<String, String>, WorkflowError> {
        match with {
            None | Some(Value::Null) => Ok(BTreeMap::new()),
            Some(Value::Mapping(m)) => m
                .iter()
                .map(|(k, v)| {
                    let key = scalar_text(k).map_err(|msg| self.invalid(format!("job `{job_id}`: input key {msg}")))?;
                    Ok((key, any_text(v)))
                })
                .collect(),
            Some(_) => Err(self.invalid(format!("job `{job_id}`: `with` must be a mapping"))),
        }
    }

    fn step(&self, job_id: &str, index: usize, value: &Value) -> Result<Step, WorkflowError> {
        let Value::Mapping(m) = value else {
            return Err(self.invalid(format!("job `{job_id}` step {index} must be a mapping")));
        };
        let text = |key: &str| -> Result<Option<String>, WorkflowError> {
            m.get(key)
                .map(scalar_text)
                .transpose()
                .map_err(|msg| self.invalid(format!("job `{job_id}` step {index}: `{key}` {msg}")))
        };
        let kind = match (text("uses")?, text("run")?) {
            (Some(_), Some(_)) => {
                return Err(self.invalid(format!("job `{job_id}` step {index} has both `uses` and `run`")))
            }
            (Some(uses), None) if !uses.trim().is_empty() => StepKind::Action {
                action: ActionRef::parse(&uses),
                inputs: self.inputs(job_id, m.get("with"))?,
            },
            (None, Some(run)) if !run.trim().is_empty() => StepKind::Command { run },
            _ => {
                return Err(self.invalid(format!(
                    "job `{job_id}` step {index} needs a non-empty `uses` or `run`"
                )))
            }
        };
        Ok(Step {
            name: text("name")?,
            id: text("id")?,
            kind,
        })
    }
}

fn scalar_text(value: &Value) -> Result<String, &'static str> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err("must be a scalar"),
    }
}

fn any_text(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::Sequence(_) | Value::Mapping(_) | Value::Tagged(_) => serde_yaml::to_string(value)
            .map(|s| s.trim_end().to_string())
            .unwrap_or_default(),
        scalar => scalar_text(scalar).unwrap_or_default(),
    }
}
