//! Plain-text renderings of analysis results.

use std::fmt::Write;

use stepguard_core::analyzer::{AttackSurface, GrantedBasis, PolicyDiff};
use stepguard_core::{CorpusReport, PermissionSet};

fn percent(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0))
}

fn basis(basis: GrantedBasis) -> &'static str {
    match basis {
        GrantedBasis::Declared => "declared",
        GrantedBasis::JobRequired => "job-required",
    }
}

pub fn corpus_table(report: &CorpusReport, default: &PermissionSet) -> String {
    let mut out = String::new();
    let t = &report.totals;
    let _ = writeln!(out, "Workflows analyzed: {}", report.workflows);
    let _ = writeln!(out, "Jobs: {}", t.jobs);
    let _ = writeln!(out, "  multi-step:  {}", t.multi_step);
    let _ = writeln!(out, "  single-step: {}", t.single_step);
    let _ = writeln!(out, "  ignored:     {}", t.ignored);
    let _ = writeln!(
        out,
        "Overprivileged: {} ({:.1}% of jobs)",
        t.overprivileged,
        report.overprivileged_fraction * 100.0
    );
    let s = &report.steps;
    let _ = writeln!(
        out,
        "Steps: {} total, {} actions ({} covered), {} reusable workflows, {} commands",
        s.total, s.actions, s.covered, s.reusable_workflows, s.commands
    );
    if s.jobs_with_uncounted_steps > 0 {
        let _ = writeln!(
            out,
            "  {} single-step or ignored jobs have two or more steps",
            s.jobs_with_uncounted_steps
        );
    }

    if !report.severity.is_empty() {
        let _ = writeln!(out, "\nSeverity of overprivileged scopes:");
        for (severity, count) in &report.severity {
            let _ = writeln!(out, "  {:<9} {count}", severity.as_str());
        }
    }

    let flagged: Vec<_> = report.jobs.iter().filter(|j| j.overprivileged).collect();
    if !flagged.is_empty() {
        let _ = writeln!(out, "\nOverprivileged jobs:");
        for job in flagged {
            let _ = writeln!(out, "  {} :: {}", job.workflow.display(), job.job_id);
            let _ = writeln!(out, "    granted:  {}", job.granted.resolve(default));
            let _ = writeln!(out, "    required: {}", job.job_required);
            for excess in &job.overprivileged_scopes {
                let _ = writeln!(out, "    excess {}:{} [{}]", excess.scope, excess.level, excess.severity);
            }
        }
    }

    if report.per_repo.len() > 1 {
        let _ = writeln!(out, "\n{:<40} {:>5} {:>6} {:>6} {:>7} {:>6}", "repository", "jobs", "multi", "single", "ignored", "over");
        for (repo, c) in &report.per_repo {
            let _ = writeln!(
                out,
                "{:<40} {:>5} {:>6} {:>6} {:>7} {:>6}",
                repo, c.jobs, c.multi_step, c.single_step, c.ignored, c.overprivileged
            );
        }
    }

    if !report.attack_surface.is_empty() {
        let _ = writeln!(out, "\nMean attack-surface reduction: {}", percent(report.mean_reduction));
    }
    if !report.unparseable.is_empty() {
        let _ = writeln!(out, "\nUnparseable files: {}", report.unparseable.len());
        for file in &report.unparseable {
            let _ = writeln!(out, "  {}: {}", file.path.display(), file.error);
        }
    }
    out
}

pub fn surface_table(rows: &[AttackSurface]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<50} {:>7} {:>13} {:>13} {:>9}  basis",
        "job", "covered", "write-needing", "write-granted", "reduction"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<50} {:>7} {:>13} {:>13} {:>9}  {}",
            format!("{} :: {}", row.workflow.display(), row.job_id),
            row.covered_steps,
            row.write_needing,
            row.write_granted,
            percent(row.reduction),
            basis(row.basis)
        );
    }
    out
}

pub fn diff_table(diff: &PolicyDiff) -> String {
    let mut out = String::new();
    let sections = [
        ("Static policy exceeds observed use:", &diff.excess),
        ("Observed use exceeds static policy:", &diff.under_declared),
    ];
    for (title, actions) in sections {
        let _ = writeln!(out, "{title}");
        if actions.is_empty() {
            let _ = writeln!(out, "  (none)");
        }
        for action in actions {
            let _ = writeln!(out, "  {}", action.action_id);
            for s in &action.scopes {
                let _ = writeln!(out, "    {}: static {} / learned {}", s.scope, s.static_level, s.learned_level);
            }
        }
    }
    if !diff.only_static.is_empty() {
        let _ = writeln!(out, "Only in static: {}", diff.only_static.join(", "));
    }
    if !diff.only_learned.is_empty() {
        let _ = writeln!(out, "Only in learned: {}", diff.only_learned.join(", "));
    }
    out
}
