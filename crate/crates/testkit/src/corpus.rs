//! Classification recount written directly against the YAML and JSON
//! documents, sharing no code with the analyzer.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value as Json;
use serde_yaml::Value as Yaml;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recount {
    pub workflows: usize,
    pub jobs: usize,
    pub single_step: usize,
    pub multi_step: usize,
    pub ignored: usize,
    pub overprivileged: usize,
}

fn rank(level: &str) -> u8 {
    match level {
        "write" => 2,
        "read" => 1,
        _ => 0,
    }
}

/// Action id -> scope -> rank, from a consolidated knowledge document.
pub fn read_kb(path: &Path) -> HashMap<String, HashMap<String, u8>> {
    let doc: Json = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    doc.as_object()
        .unwrap()
        .iter()
        .map(|(action, perms)| {
            let perms = perms
                .as_object()
                .unwrap()
                .iter()
                .map(|(scope, level)| (scope.clone(), rank(level.as_str().unwrap())))
                .collect();
            (action.to_lowercase(), perms)
        })
        .collect()
}

fn workflow_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            workflow_files(&path, out);
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("yml" | "yaml")) {
            out.push(path);
        }
    }
}

/// Covered-step permission maps of one job.
fn covered_steps<'k>(job: &Yaml, kb: &'k HashMap<String, HashMap<String, u8>>) -> Vec<&'k HashMap<String, u8>> {
    let Some(steps) = job.get("steps").and_then(Yaml::as_sequence) else {
        return Vec::new();
    };
    steps
        .iter()
        .filter_map(|step| step.get("uses").and_then(Yaml::as_str))
        .filter(|uses| !uses.contains(".github/workflows/"))
        .filter_map(|uses| {
            let name = match uses.rfind('@') {
                Some(i) if !uses.starts_with("./") && !uses.starts_with("docker://") => &uses[..i],
                _ => uses,
            };
            kb.get(&name.to_lowercase())
        })
        .collect()
}

/// Compares every ordered pair of covered steps on every scope either names.
fn has_excess(steps: &[&HashMap<String, u8>]) -> bool {
    for (i, a) in steps.iter().enumerate() {
        for (j, b) in steps.iter().enumerate() {
            if i == j {
                continue;
            }
            for (scope, &level_b) in b.iter() {
                let level_a = a.get(scope).copied().unwrap_or(0);
                if level_a < level_b {
                    return true;
                }
            }
        }
    }
    false
}

pub fn recount(corpus: &Path, kb_path: &Path) -> Recount {
    let kb = read_kb(kb_path);
    let mut files = Vec::new();
    workflow_files(corpus, &mut files);
    let mut out = Recount::default();
    for file in files {
        let Ok(doc) = serde_yaml::from_str::<Yaml>(&fs::read_to_string(&file).unwrap()) else {
            continue;
        };
        let Some(jobs) = doc.get("jobs").and_then(Yaml::as_mapping) else {
            continue;
        };
        out.workflows += 1;
        for job in jobs.values() {
            out.jobs += 1;
            let steps = covered_steps(job, &kb);
            match steps.len() {
                0 => out.ignored += 1,
                1 => out.single_step += 1,
                _ => {
                    out.multi_step += 1;
                    if has_excess(&steps) {
                        out.overprivileged += 1;
                    }
                }
            }
        }
    }
    out
}
