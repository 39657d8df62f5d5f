//! Application validation. Violations are data, not errors: a submission
//! either comes back with an empty list or with every breach enumerated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::models::operators;
use crate::models::placeholders;
use crate::types::{ApplicationDescriptor, FileSpec, ModelPayload, WorkflowPayload};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    EmptyOwner,
    EmptyAppId,
    EmptyApplication,
    EmptyTemplate,
    EmptyParameterValues { name: String },
    DuplicateParameter { name: String },
    UnknownPlaceholder { name: String },
    DuplicateLogicalName { name: String },
    OperatorNotFound { name: String },
    NonPositiveReducers,
    CycleDetected,
    UnknownEdgeEndpoint { task: String },
    EdgeFileSizeMismatch { from: String, to: String, file: String },
    NoCommandOrDuration { task: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyOwner => write!(f, "EmptyOwner: owner must be non-empty"),
            Violation::EmptyAppId => write!(f, "EmptyAppId: app_id, when given, must be non-empty"),
            Violation::EmptyApplication => write!(f, "EmptyApplication: no execution units"),
            Violation::EmptyTemplate => write!(f, "EmptyTemplate: template command has no program"),
            Violation::EmptyParameterValues { name } => {
                write!(f, "EmptyParameterValues: parameter {name:?} has no values")
            }
            Violation::DuplicateParameter { name } => {
                write!(f, "DuplicateParameter: parameter {name:?} declared twice")
            }
            Violation::UnknownPlaceholder { name } => {
                write!(f, "UnknownPlaceholder: placeholder {{{name}}} has no parameter")
            }
            Violation::DuplicateLogicalName { name } => {
                write!(f, "DuplicateLogicalName: {name:?} appears twice in one manifest")
            }
            Violation::OperatorNotFound { name } => {
                write!(f, "OperatorNotFound: no built-in operator {name:?}")
            }
            Violation::NonPositiveReducers => write!(f, "NonPositiveReducers: reducers must be >= 1"),
            Violation::CycleDetected => write!(f, "CycleDetected: workflow edges form a cycle"),
            Violation::UnknownEdgeEndpoint { task } => {
                write!(f, "UnknownEdgeEndpoint: edge references unknown task {task:?}")
            }
            Violation::EdgeFileSizeMismatch { from, to, file } => write!(
                f,
                "EdgeFileSizeMismatch: {file:?} has different sizes on {from:?} and {to:?}"
            ),
            Violation::NoCommandOrDuration { task } => {
                write!(f, "NoCommandOrDuration: task {task:?} has neither command nor duration")
            }
        }
    }
}

/// Checks a descriptor against its model's schema and the shared invariants.
/// An empty result means the application is valid.
pub fn validate_application(descriptor: &ApplicationDescriptor) -> Vec<Violation> {
    let mut out = Vec::new();

    if descriptor.owner.trim().is_empty() {
        out.push(Violation::EmptyOwner);
    }
    if let Some(app_id) = &descriptor.app_id {
        if app_id.is_empty() {
            out.push(Violation::EmptyAppId);
        }
    }
    check_manifest(&descriptor.shared_files, &mut out);

    match &descriptor.model {
        ModelPayload::Task(p) => {
            if p.tasks.is_empty() {
                out.push(Violation::EmptyApplication);
            }
            for t in &p.tasks {
                check_manifest(&t.inputs, &mut out);
                check_manifest(&t.outputs, &mut out);
            }
        }
        ModelPayload::Psm(p) => {
            if p.template.program.trim().is_empty() {
                out.push(Violation::EmptyTemplate);
            }
            let mut names = BTreeSet::new();
            for param in &p.parameters {
                if !names.insert(param.name.clone()) {
                    out.push(Violation::DuplicateParameter {
                        name: param.name.clone(),
                    });
                }
                if param.values.is_empty() {
                    out.push(Violation::EmptyParameterValues {
                        name: param.name.clone(),
                    });
                }
            }
            for arg in &p.template.args {
                for ph in placeholders(arg) {
                    if !names.contains(&ph) {
                        out.push(Violation::UnknownPlaceholder { name: ph });
                    }
                }
            }
            check_manifest(&p.template.inputs, &mut out);
            check_manifest(&p.template.outputs, &mut out);
        }
        ModelPayload::MapReduce(p) => {
            if p.input.is_empty() {
                out.push(Violation::EmptyApplication);
            }
            if p.reducers == 0 {
                out.push(Violation::NonPositiveReducers);
            }
            if operators::mapper(&p.mapper).is_none() {
                out.push(Violation::OperatorNotFound {
                    name: p.mapper.clone(),
                });
            }
            if operators::reducer(&p.reducer).is_none() {
                out.push(Violation::OperatorNotFound {
                    name: p.reducer.clone(),
                });
            }
            check_manifest(&p.input, &mut out);
        }
        ModelPayload::Workflow(p) => validate_workflow(p, &mut out),
    }

    out
}

fn check_manifest(files: &[FileSpec], out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for f in files {
        if !seen.insert(f.logical_name.as_str()) {
            out.push(Violation::DuplicateLogicalName {
                name: f.logical_name.clone(),
            });
        }
    }
}

fn validate_workflow(p: &WorkflowPayload, out: &mut Vec<Violation>) {
    if p.tasks.is_empty() {
        out.push(Violation::EmptyApplication);
    }
    for (id, task) in &p.tasks {
        if task.command.is_none() && task.sim_duration_s.is_none() {
            out.push(Violation::NoCommandOrDuration { task: id.clone() });
        }
        let mut seen = BTreeSet::new();
        for f in &task.inputs {
            if !seen.insert(f.file.as_str()) {
                out.push(Violation::DuplicateLogicalName {
                    name: f.file.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for f in &task.outputs {
            if !seen.insert(f.file.as_str()) {
                out.push(Violation::DuplicateLogicalName {
                    name: f.file.clone(),
                });
            }
        }
    }

    let mut endpoints_ok = true;
    for (from, to) in &p.edges {
        for task in [from, to] {
            if !p.tasks.contains_key(task) {
                out.push(Violation::UnknownEdgeEndpoint { task: task.clone() });
                endpoints_ok = false;
            }
        }
    }
    if !endpoints_ok {
        return;
    }

    // Files a parent hands to a child must be declared with one size.
    for (from, to) in &p.edges {
        let (src, dst) = (&p.tasks[from], &p.tasks[to]);
        for of in &src.outputs {
            if let Some(inf) = dst.inputs.iter().find(|i| i.file == of.file) {
                if inf.size_bytes != of.size_bytes {
                    out.push(Violation::EdgeFileSizeMismatch {
                        from: from.clone(),
                        to: to.clone(),
                        file: of.file.clone(),
                    });
                }
            }
        }
    }

    if has_cycle(p) {
        out.push(Violation::CycleDetected);
    }
}

/// Kahn's algorithm over the edge list.
fn has_cycle(p: &WorkflowPayload) -> bool {
    let mut indegree: BTreeMap<&str, usize> = p.tasks.keys().map(|k| (k.as_str(), 0)).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in &p.edges {
        *indegree.get_mut(to.as_str()).unwrap() += 1;
        children.entry(from.as_str()).or_default().push(to.as_str());
    }
    let mut queue: Vec<&str> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut visited = 0usize;
    while let Some(task) = queue.pop() {
        visited += 1;
        for child in children.get(task).into_iter().flatten() {
            let d = indegree.get_mut(child).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push(child);
            }
        }
    }
    visited != p.tasks.len()
}
