//! Workflow expansion, readiness computation, and the shipped
//! image-registration workflow shape.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::{
    AppId, CommandSpec, ExecutionUnit, FileSpec, IoFile, UnitId, UnitWork, WorkflowPayload,
    WorkflowTask,
};

use super::Expansion;

/// Turns a workflow payload into units keyed by task id, with edge-derived
/// prerequisites. Task-level manifests are authoritative.
pub fn expand_workflow(app_id: &AppId, payload: &WorkflowPayload) -> Result<Expansion, super::ModelError> {
    if payload.tasks.is_empty() {
        return Err(super::ModelError::EmptyApplication);
    }
    let mut units = Vec::with_capacity(payload.tasks.len());
    for (task_id, task) in &payload.tasks {
        let mut cmd = task
            .command
            .clone()
            .unwrap_or_else(|| CommandSpec::simulated(task.sim_duration_s.unwrap_or(0.0)));
        if task.sim_duration_s.is_some() {
            cmd.sim_duration_s = task.sim_duration_s;
        }
        cmd.inputs = task.inputs.iter().map(io_to_spec).collect();
        cmd.outputs = task.outputs.iter().map(io_to_spec).collect();
        units.push(ExecutionUnit::new(
            app_id.clone(),
            UnitId::new(task_id.clone()),
            UnitWork::Command(cmd),
        ));
    }
    let mut deps: BTreeMap<UnitId, BTreeSet<UnitId>> = BTreeMap::new();
    for (from, to) in &payload.edges {
        deps.entry(UnitId::new(to.clone()))
            .or_default()
            .insert(UnitId::new(from.clone()));
    }
    Ok(Expansion { units, deps })
}

fn io_to_spec(f: &IoFile) -> FileSpec {
    FileSpec::sized(f.file.clone(), f.size_bytes)
}

/// Exactly the tasks whose parents are all in `completed` and which are
/// neither completed nor currently in progress.
pub fn ready_set(
    payload: &WorkflowPayload,
    completed: &BTreeSet<String>,
    in_progress: &BTreeSet<String>,
) -> BTreeSet<String> {
    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in &payload.edges {
        parents.entry(to.as_str()).or_default().push(from.as_str());
    }
    payload
        .tasks
        .keys()
        .filter(|t| !completed.contains(*t) && !in_progress.contains(*t))
        .filter(|t| {
            parents
                .get(t.as_str())
                .map(|ps| ps.iter().all(|p| completed.contains(*p)))
                .unwrap_or(true)
        })
        .cloned()
        .collect()
}

/// The shipped image-registration workflow shape: a per-subject two-step
/// chain fanning into a shared three-task tail. Durations calibrate one
/// subject to 69 simulated minutes end to end; step names are cosmetic.
///
/// Per subject: two 16 MB inputs, intermediate outputs in the 20-40 MB
/// band. Twenty subjects stage 640 MB of input in total.
pub fn ir_workflow(subjects: usize) -> WorkflowPayload {
    const MB: u64 = 1_000_000;
    let mut tasks = BTreeMap::new();
    let mut edges = Vec::new();

    for s in 0..subjects {
        let warp = format!("warp-{s:02}");
        let reslice = format!("reslice-{s:02}");
        tasks.insert(
            warp.clone(),
            WorkflowTask {
                command: None,
                sim_duration_s: Some(1500.0),
                inputs: vec![
                    IoFile::new(format!("anat-{s:02}.img"), 16 * MB),
                    IoFile::new(format!("anat-{s:02}.hdr"), 16 * MB),
                ],
                outputs: vec![IoFile::new(format!("warped-{s:02}.img"), 20 * MB)],
            },
        );
        tasks.insert(
            reslice.clone(),
            WorkflowTask {
                command: None,
                sim_duration_s: Some(1320.0),
                inputs: vec![IoFile::new(format!("warped-{s:02}.img"), 20 * MB)],
                outputs: vec![IoFile::new(format!("resliced-{s:02}.img"), 30 * MB)],
            },
        );
        edges.push((warp, reslice.clone()));
        edges.push((reslice, "average".to_string()));
    }

    tasks.insert(
        "average".to_string(),
        WorkflowTask {
            command: None,
            sim_duration_s: Some(900.0),
            inputs: (0..subjects)
                .map(|s| IoFile::new(format!("resliced-{s:02}.img"), 30 * MB))
                .collect(),
            outputs: vec![IoFile::new("atlas.img", 40 * MB)],
        },
    );
    tasks.insert(
        "project".to_string(),
        WorkflowTask {
            command: None,
            sim_duration_s: Some(240.0),
            inputs: vec![IoFile::new("atlas.img", 40 * MB)],
            outputs: vec![IoFile::new("atlas-x.img", 25 * MB)],
        },
    );
    tasks.insert(
        "render".to_string(),
        WorkflowTask {
            command: None,
            sim_duration_s: Some(180.0),
            inputs: vec![IoFile::new("atlas-x.img", 25 * MB)],
            outputs: vec![IoFile::new("atlas.gif", 20 * MB)],
        },
    );
    edges.push(("average".to_string(), "project".to_string()));
    edges.push(("project".to_string(), "render".to_string()));

    WorkflowPayload { tasks, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> WorkflowPayload {
        let mut tasks = BTreeMap::new();
        for id in ["A", "B", "C", "D"] {
            tasks.insert(
                id.to_string(),
                WorkflowTask {
                    sim_duration_s: Some(1.0),
                    ..Default::default()
                },
            );
        }
        WorkflowPayload {
            tasks,
            edges: vec![
                ("A".into(), "B".into()),
                ("A".into(), "C".into()),
                ("B".into(), "D".into()),
                ("C".into(), "D".into()),
            ],
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ready_set_walks_the_diamond() {
        let wf = diamond();
        let none = BTreeSet::new();
        assert_eq!(ready_set(&wf, &none, &none), set(&["A"]));
        assert_eq!(ready_set(&wf, &set(&["A"]), &none), set(&["B", "C"]));
        assert_eq!(ready_set(&wf, &set(&["A", "B", "C"]), &none), set(&["D"]));
        assert_eq!(ready_set(&wf, &set(&["A", "B", "C", "D"]), &none), set(&[]));
    }

    #[test]
    fn in_progress_tasks_are_not_ready() {
        let wf = diamond();
        assert_eq!(
            ready_set(&wf, &set(&["A"]), &set(&["B"])),
            set(&["C"])
        );
    }

    #[test]
    fn one_subject_runs_sixty_nine_serial_minutes() {
        let wf = ir_workflow(1);
        let total: f64 = wf.tasks.values().map(|t| t.sim_duration_s.unwrap()).sum();
        assert_eq!(total, 69.0 * 60.0);
    }

    #[test]
    fn twenty_subjects_stage_640_megabytes() {
        let wf = ir_workflow(20);
        // Workflow-initial inputs: those no task produces.
        let produced: BTreeSet<&str> = wf
            .tasks
            .values()
            .flat_map(|t| t.outputs.iter().map(|f| f.file.as_str()))
            .collect();
        let initial: u64 = wf
            .tasks
            .values()
            .flat_map(|t| t.inputs.iter())
            .filter(|f| !produced.contains(f.file.as_str()))
            .map(|f| f.size_bytes)
            .sum();
        assert_eq!(initial, 640_000_000);
        assert!(crate::validate::validate_application(
            &crate::types::ApplicationDescriptor::new(
                "imaging",
                crate::types::ModelPayload::Workflow(wf),
            )
        )
        .is_empty());
    }

    #[test]
    fn expansion_carries_edge_dependencies() {
        let exp = expand_workflow(&AppId::new("a"), &diamond()).unwrap();
        assert_eq!(exp.units.len(), 4);
        assert_eq!(
            exp.deps[&UnitId::new("D")],
            [UnitId::new("B"), UnitId::new("C")].into_iter().collect()
        );
        assert!(!exp.deps.contains_key(&UnitId::new("A")));
    }
}
