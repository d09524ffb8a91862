//! Offline workflow analysis: overprivileged jobs, severity, attack surface,
//! and static-versus-learned policy comparison.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::permission::{severity_of, AccessLevel, PermissionScope, PermissionSet, Severity};
use crate::policy::KnowledgeBase;
use crate::workflow::{parse_workflow_tree, EffectivePermissions, Job, StepKind, Workflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    SingleStep,
    MultiStep,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepCategory {
    Action,
    ReusableWorkflow,
    Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequirement {
    pub index: usize,
    pub category: StepCategory,
    pub action_id: Option<String>,
    /// The knowledge-base policy; `None` when the step is not covered.
    pub required: Option<PermissionSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcessScope {
    pub scope: PermissionScope,
    pub level: AccessLevel,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAnalysis {
    pub workflow: PathBuf,
    pub job_id: String,
    pub classification: Classification,
    pub step_count: usize,
    pub covered_steps: usize,
    pub job_required: PermissionSet,
    pub per_step_required: Vec<StepRequirement>,
    pub overprivileged: bool,
    pub overprivileged_scopes: Vec<ExcessScope>,
    pub granted: EffectivePermissions,
}

impl JobAnalysis {
    fn covered(&self) -> impl Iterator<Item = &StepRequirement> {
        self.per_step_required.iter().filter(|s| s.required.is_some())
    }
}

/// Classifies one job from its covered steps: action steps with a
/// knowledge-base entry. Commands, reusable workflows and unknown actions
/// are left out. `granted` comes from the job's own block only; see
/// [`analyze_workflow`] for workflow-level fallback.
pub fn analyze_job(job: &Job, kb: &KnowledgeBase) -> JobAnalysis {
    let per_step_required: Vec<StepRequirement> = job
        .steps
        .iter()
        .enumerate()
        .map(|(index, step)| match &step.kind {
            StepKind::Command { .. } => StepRequirement {
                index,
                category: StepCategory::Command,
                action_id: None,
                required: None,
            },
            StepKind::Action { action, .. } => {
                let id = action.action_id();
                let required = if action.workflow {
                    None
                } else {
                    kb.lookup(&id).map(|p| p.permissions)
                };
                StepRequirement {
                    index,
                    category: if action.workflow {
                        StepCategory::ReusableWorkflow
                    } else {
                        StepCategory::Action
                    },
                    action_id: Some(id),
                    required,
                }
            }
        })
        .collect();

    let covered: Vec<PermissionSet> = per_step_required.iter().filter_map(|s| s.required).collect();
    let job_required = covered.iter().fold(PermissionSet::none(), |acc, s| acc.union(s));
    let classification = match covered.len() {
        0 => Classification::Ignored,
        1 => Classification::SingleStep,
        _ => Classification::MultiStep,
    };

    let overprivileged_scopes: Vec<ExcessScope> = if classification == Classification::MultiStep {
        PermissionScope::ALL
            .into_iter()
            .filter(|&scope| covered.iter().any(|s| s.get(scope) < job_required.get(scope)))
            .map(|scope| {
                let level = job_required.get(scope);
                ExcessScope {
                    scope,
                    level,
                    severity: severity_of(scope, level).expect("excess level is above none"),
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    JobAnalysis {
        workflow: PathBuf::new(),
        job_id: job.id.clone(),
        classification,
        step_count: job.steps.len(),
        covered_steps: covered.len(),
        job_required,
        per_step_required,
        overprivileged: !overprivileged_scopes.is_empty(),
        overprivileged_scopes,
        granted: match job.declared_permissions {
            Some(set) => EffectivePermissions::Declared(set),
            None => EffectivePermissions::UnspecifiedDefault,
        },
    }
}

pub fn analyze_workflow(path: &Path, workflow: &Workflow, kb: &KnowledgeBase) -> Vec<JobAnalysis> {
    workflow
        .jobs
        .iter()
        .map(|job| {
            let mut analysis = analyze_job(job, kb);
            analysis.workflow = path.to_path_buf();
            analysis.granted = workflow
                .effective_job_permissions(&job.id)
                .expect("job belongs to workflow");
            analysis
        })
        .collect()
}

/// Which permission set a job's steps are taken to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrantedBasis {
    Declared,
    JobRequired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSurface {
    pub workflow: PathBuf,
    pub job_id: String,
    pub covered_steps: usize,
    pub write_needing: usize,
    pub write_granted: usize,
    /// `1 - write_needing / write_granted`; `None` when nothing is granted write.
    pub reduction: Option<f64>,
    pub basis: GrantedBasis,
}

/// Write-holding steps under job-level granting versus write-needing steps
/// under step-level granting. A step's own requirement comes from `learned`
/// when it has an entry, otherwise from `kb`.
pub fn attack_surface(analysis: &JobAnalysis, learned: Option<&KnowledgeBase>) -> AttackSurface {
    let (granted, basis) = match analysis.granted {
        EffectivePermissions::Declared(set) => (set, GrantedBasis::Declared),
        EffectivePermissions::UnspecifiedDefault => (analysis.job_required, GrantedBasis::JobRequired),
    };
    let covered_steps = analysis.covered_steps;
    let write_granted = if granted.has_write() { covered_steps } else { 0 };
    let write_needing = analysis
        .covered()
        .filter(|step| {
            let own = step
                .action_id
                .as_deref()
                .and_then(|id| learned.and_then(|l| l.lookup(id)))
                .map(|p| p.permissions)
                .or(step.required)
                .unwrap_or_default();
            own.has_write()
        })
        .count();
    let reduction = (write_granted > 0).then(|| 1.0 - write_needing as f64 / write_granted as f64);
    AttackSurface {
        workflow: analysis.workflow.clone(),
        job_id: analysis.job_id.clone(),
        covered_steps,
        write_needing,
        write_granted,
        reduction,
        basis,
    }
}

/// Counts every overprivileged scope of every job by severity.
pub fn severity_report<'a>(analyses: impl IntoIterator<Item = &'a JobAnalysis>) -> BTreeMap<Severity, usize> {
    let mut histogram = BTreeMap::new();
    for analysis in analyses {
        for excess in &analysis.overprivileged_scopes {
            *histogram.entry(excess.severity).or_insert(0) += 1;
        }
    }
    histogram
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub jobs: usize,
    pub single_step: usize,
    pub multi_step: usize,
    pub ignored: usize,
    pub overprivileged: usize,
}

impl ClassCounts {
    fn add(&mut self, analysis: &JobAnalysis) {
        self.jobs += 1;
        match analysis.classification {
            Classification::SingleStep => self.single_step += 1,
            Classification::MultiStep => self.multi_step += 1,
            Classification::Ignored => self.ignored += 1,
        }
        if analysis.overprivileged {
            self.overprivileged += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub total: usize,
    pub actions: usize,
    pub reusable_workflows: usize,
    pub commands: usize,
    pub covered: usize,
    /// Jobs classified single-step or ignored that have two or more steps.
    pub jobs_with_uncounted_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnparseableFile {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub workflows: usize,
    pub totals: ClassCounts,
    /// Overprivileged jobs over all jobs; 0 for an empty corpus.
    pub overprivileged_fraction: f64,
    pub severity: BTreeMap<Severity, usize>,
    pub per_repo: BTreeMap<String, ClassCounts>,
    /// One row per overprivileged job.
    pub attack_surface: Vec<AttackSurface>,
    pub mean_reduction: Option<f64>,
    pub steps: StepCounts,
    pub unparseable: Vec<UnparseableFile>,
    pub jobs: Vec<JobAnalysis>,
}

impl CorpusReport {
    pub fn critical_findings(&self) -> usize {
        self.severity.get(&Severity::Critical).copied().unwrap_or(0)
    }
}

/// Repository key for a workflow: its directory relative to the corpus root,
/// with a trailing `.github/workflows` removed.
pub fn repo_key(root: &Path, workflow: &Path) -> String {
    let rel = workflow.strip_prefix(root).unwrap_or(workflow);
    let parent = rel.parent().unwrap_or(Path::new(""));
    let parent = parent.to_string_lossy().replace('\\', "/");
    let key = parent
        .strip_suffix(".github/workflows")
        .unwrap_or(&parent)
        .trim_end_matches('/');
    if key.is_empty() {
        ".".to_string()
    } else {
        key.to_string()
    }
}

/// Analyzes every workflow file under `root`. Files that fail to parse are
/// listed in the report and otherwise skipped.
pub fn analyze_corpus(root: &Path, kb: &KnowledgeBase) -> CorpusReport {
    let mut parsed = Vec::new();
    let mut unparseable = Vec::new();
    for (path, result) in parse_workflow_tree(root) {
        match result {
            Ok(wf) => parsed.push((path, wf)),
            Err(e) => unparseable.push(UnparseableFile {
                path: path.strip_prefix(root).unwrap_or(&path).to_path_buf(),
                error: e.to_string(),
            }),
        }
    }
    let workflows = parsed.len();
    let mut per_repo: BTreeMap<String, ClassCounts> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (path, wf) in &parsed {
        let rel = path.strip_prefix(root).unwrap_or(path);
        let repo = per_repo.entry(repo_key(root, path)).or_default();
        for analysis in analyze_workflow(rel, wf, kb) {
            repo.add(&analysis);
            jobs.push(analysis);
        }
    }
    summarize(workflows, jobs, per_repo, unparseable)
}

fn summarize(
    workflows: usize,
    jobs: Vec<JobAnalysis>,
    per_repo: BTreeMap<String, ClassCounts>,
    unparseable: Vec<UnparseableFile>,
) -> CorpusReport {
    let mut totals = ClassCounts::default();
    let mut steps = StepCounts::default();
    for job in &jobs {
        totals.add(job);
        for step in &job.per_step_required {
            steps.total += 1;
            match step.category {
                StepCategory::Action => steps.actions += 1,
                StepCategory::ReusableWorkflow => steps.reusable_workflows += 1,
                StepCategory::Command => steps.commands += 1,
            }
        }
        steps.covered += job.covered_steps;
        if job.classification != Classification::MultiStep && job.step_count >= 2 {
            steps.jobs_with_uncounted_steps += 1;
        }
    }
    let attack_surface: Vec<AttackSurface> = jobs
        .iter()
        .filter(|j| j.overprivileged)
        .map(|j| attack_surface(j, None))
        .collect();
    let reductions: Vec<f64> = attack_surface.iter().filter_map(|a| a.reduction).collect();
    let mean_reduction = (!reductions.is_empty()).then(|| reductions.iter().sum::<f64>() / reductions.len() as f64);
    CorpusReport {
        workflows,
        overprivileged_fraction: if totals.jobs == 0 {
            0.0
        } else {
            totals.overprivileged as f64 / totals.jobs as f64
        },
        totals,
        severity: severity_report(&jobs),
        per_repo,
        attack_surface,
        mean_reduction,
        steps,
        unparseable,
        jobs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeDifference {
    pub scope: PermissionScope,
    pub static_level: AccessLevel,
    pub learned_level: AccessLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDiff {
    pub action_id: String,
    pub scopes: Vec<ScopeDifference>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDiff {
    /// Scopes where the static policy grants more than was used.
    pub excess: Vec<ActionDiff>,
    /// Scopes where learned use exceeds the static policy.
    pub under_declared: Vec<ActionDiff>,
    pub only_static: Vec<String>,
    pub only_learned: Vec<String>,
}

pub fn diff_policies(static_kb: &KnowledgeBase, learned_kb: &KnowledgeBase) -> PolicyDiff {
    let mut diff = PolicyDiff::default();
    for declared in static_kb.iter() {
        let Some(learned) = learned_kb.lookup(&declared.action_id) else {
            diff.only_static.push(declared.action_id.clone());
            continue;
        };
        let mut excess = Vec::new();
        let mut under = Vec::new();
        for scope in PermissionScope::ALL {
            let (s, l) = (declared.permissions.get(scope), learned.permissions.get(scope));
            let row = ScopeDifference {
                scope,
                static_level: s,
                learned_level: l,
            };
            if s > l {
                excess.push(row);
            } else if l > s {
                under.push(row);
            }
        }
        if !excess.is_empty() {
            diff.excess.push(ActionDiff {
                action_id: declared.action_id.clone(),
                scopes: excess,
            });
        }
        if !under.is_empty() {
            diff.under_declared.push(ActionDiff {
                action_id: declared.action_id.clone(),
                scopes: under,
            });
        }
    }
    diff.only_learned = learned_kb
        .iter()
        .filter(|p| static_kb.lookup(&p.action_id).is_none())
        .map(|p| p.action_id.clone())
        .collect();
    diff
}
