//! Programming-model frontends: each one turns an application payload into
//! execution units plus the dependency edges the scheduler must respect.

pub mod operators;
pub mod stage_driver;
pub mod workflow;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::types::{
    AppId, ApplicationDescriptor, CommandSpec, ExecutionUnit, FileSpec, MapReducePayload, MapStep,
    ModelPayload, PsmPayload, ReduceStep, TaskPayload, UnitId, UnitWork,
};

pub use workflow::{ir_workflow, ready_set};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("application expands to zero units")]
    EmptyApplication,
    #[error("placeholder {{{0}}} has no parameter")]
    UnknownPlaceholder(String),
    #[error("no built-in operator named {0:?}")]
    OperatorNotFound(String),
    #[error("parameter {0:?} has no values")]
    EmptyParameterValues(String),
}

/// Units plus intra-application prerequisites. A unit enters the dispatch
/// queue only once every prerequisite has completed.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub units: Vec<ExecutionUnit>,
    pub deps: BTreeMap<UnitId, BTreeSet<UnitId>>,
}

impl Expansion {
    fn independent(units: Vec<ExecutionUnit>) -> Self {
        Self {
            units,
            deps: BTreeMap::new(),
        }
    }
}

/// Expands a validated descriptor into its unit graph.
pub fn expand_application(
    app_id: &AppId,
    descriptor: &ApplicationDescriptor,
) -> Result<Expansion, ModelError> {
    match &descriptor.model {
        ModelPayload::Task(p) => Ok(Expansion::independent(expand_task(app_id, p)?)),
        ModelPayload::Psm(p) => Ok(Expansion::independent(expand_psm(app_id, p)?)),
        ModelPayload::MapReduce(p) => {
            let plan = plan_mapreduce(app_id, p)?;
            Ok(plan.into_expansion())
        }
        ModelPayload::Workflow(p) => workflow::expand_workflow(app_id, p),
    }
}

/// One unit per listed command, order preserved.
pub fn expand_task(app_id: &AppId, payload: &TaskPayload) -> Result<Vec<ExecutionUnit>, ModelError> {
    if payload.tasks.is_empty() {
        return Err(ModelError::EmptyApplication);
    }
    Ok(payload
        .tasks
        .iter()
        .enumerate()
        .map(|(i, cmd)| {
            ExecutionUnit::new(
                app_id.clone(),
                UnitId::new(format!("t{i:04}")),
                UnitWork::Command(cmd.clone()),
            )
        })
        .collect())
}

/// Cartesian product of the parameter values in declared order, rightmost
/// parameter varying fastest; placeholders substituted textually.
pub fn expand_psm(app_id: &AppId, payload: &PsmPayload) -> Result<Vec<ExecutionUnit>, ModelError> {
    for p in &payload.parameters {
        if p.values.is_empty() {
            return Err(ModelError::EmptyParameterValues(p.name.clone()));
        }
    }
    // Product over no parameters is 1: a parameterless template still
    // yields one unit.
    let total: usize = payload.parameters.iter().map(|p| p.values.len()).product();

    let mut units = Vec::with_capacity(total);
    let mut indices = vec![0usize; payload.parameters.len()];
    for i in 0..total {
        let mut cmd = payload.template.clone();
        for arg in cmd.args.iter_mut() {
            let mut text = arg.clone();
            for (pi, param) in payload.parameters.iter().enumerate() {
                text = text.replace(&format!("{{{}}}", param.name), &param.values[indices[pi]]);
            }
            if let Some(ph) = placeholders(&text).into_iter().next() {
                return Err(ModelError::UnknownPlaceholder(ph));
            }
            *arg = text;
        }
        units.push(ExecutionUnit::new(
            app_id.clone(),
            UnitId::new(format!("p{i:04}")),
            UnitWork::Command(cmd),
        ));
        // Odometer step, rightmost fastest.
        for pi in (0..indices.len()).rev() {
            indices[pi] += 1;
            if indices[pi] < payload.parameters[pi].values.len() {
                break;
            }
            indices[pi] = 0;
        }
    }
    Ok(units)
}

/// How a MapReduce application is laid out: which intermediate file each
/// map emits for each reducer index.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub reducers: u32,
    /// `intermediate[i][j]` is the file map `i` emits for reducer `j`.
    pub intermediate: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct MapReducePlan {
    pub map_units: Vec<ExecutionUnit>,
    pub reduce_units: Vec<ExecutionUnit>,
    pub partition_plan: PartitionPlan,
}

impl MapReducePlan {
    /// Reduce units are barred until every map unit has completed.
    pub fn into_expansion(self) -> Expansion {
        let map_ids: BTreeSet<UnitId> = self.map_units.iter().map(|u| u.unit_id.clone()).collect();
        let mut deps = BTreeMap::new();
        for r in &self.reduce_units {
            deps.insert(r.unit_id.clone(), map_ids.clone());
        }
        let mut units = self.map_units;
        units.extend(self.reduce_units);
        Expansion { units, deps }
    }
}

/// Plans one map unit per input partition and `reducers` reduce units.
/// Records are routed to reducer `fnv1a64(key) mod R`.
pub fn plan_mapreduce(
    app_id: &AppId,
    payload: &MapReducePayload,
) -> Result<MapReducePlan, ModelError> {
    if payload.input.is_empty() {
        return Err(ModelError::EmptyApplication);
    }
    if operators::mapper(&payload.mapper).is_none() {
        return Err(ModelError::OperatorNotFound(payload.mapper.clone()));
    }
    if operators::reducer(&payload.reducer).is_none() {
        return Err(ModelError::OperatorNotFound(payload.reducer.clone()));
    }
    let reducers = payload.reducers.max(1);

    let mut intermediate = Vec::with_capacity(payload.input.len());
    let mut map_units = Vec::with_capacity(payload.input.len());
    for (i, partition) in payload.input.iter().enumerate() {
        let row: Vec<String> = (0..reducers).map(|j| format!("mr-{i:04}-{j:04}")).collect();
        let outputs: Vec<FileSpec> = row.iter().map(|n| FileSpec::sized(n.clone(), 0)).collect();
        map_units.push(ExecutionUnit::new(
            app_id.clone(),
            UnitId::new(format!("m{i:04}")),
            UnitWork::Map(MapStep {
                mapper: payload.mapper.clone(),
                partition: partition.clone(),
                reducers,
                outputs,
                sim_duration_s: payload.map_duration_s,
            }),
        ));
        intermediate.push(row);
    }

    let mut reduce_units = Vec::with_capacity(reducers as usize);
    for j in 0..reducers {
        let inputs: Vec<FileSpec> = intermediate
            .iter()
            .map(|row| FileSpec::sized(row[j as usize].clone(), 0))
            .collect();
        reduce_units.push(ExecutionUnit::new(
            app_id.clone(),
            UnitId::new(format!("r{j:04}")),
            UnitWork::Reduce(ReduceStep {
                reducer: payload.reducer.clone(),
                index: j,
                inputs,
                outputs: vec![FileSpec::sized(format!("mr-out-{j:04}"), 0)],
                sim_duration_s: payload.reduce_duration_s,
            }),
        ));
    }

    Ok(MapReducePlan {
        map_units,
        reduce_units,
        partition_plan: PartitionPlan {
            reducers,
            intermediate,
        },
    })
}

/// Placeholder names appearing as `{name}` spans in `text`.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find('}') {
                let name = &text[i + 1..i + 1 + end];
                if !name.is_empty() && !name.contains('{') {
                    out.push(name.to_string());
                }
                i += end + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}
