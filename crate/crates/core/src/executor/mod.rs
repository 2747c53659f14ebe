//! Function calling and task execution, then response synthesis.
//!
//! Tasks run one at a time in plan order, which validation guarantees is a
//! dependency order. Each task gets a model from the selector (or an explicit
//! override), its arguments are assembled from the task slots plus any
//! same-named output fields of the tasks it depends on, and the call goes
//! through the canonical envelope before dispatch. A failing task is
//! recorded as an error result; the rest of the plan still runs.

mod envelope;
mod response;
mod toolbox;

pub use envelope::{
    decode_tool_call, decode_tool_result, encode_tool_call, encode_tool_result, EnvelopeParseError, ToolCall,
    ToolResult, ToolStatus,
};
pub use response::{compose_response, ResponseDocument};
pub use toolbox::{ExpertModel, ModelOutput, SolverKind, SolverModel, Toolbox, DEFAULT_P_MAX};

use crate::memory::embed_text;
use crate::planner::{validate_plan, Plan, Violation};
use crate::registry::Registry;
use crate::selector::{cosine_similarity, rank_models, RankedCandidate};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("plan invalid: {}", join_violations(.0))]
    PlanInvalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Everything `execute_plan` needs besides the plan.
pub struct ExecutionContext<'a> {
    pub registry: &'a Registry,
    pub toolbox: &'a Toolbox,
    pub top_n: usize,
    /// Task id → model id chosen elsewhere (e.g. by the LLM), bypassing ranking.
    pub model_overrides: BTreeMap<usize, String>,
}

impl<'a> ExecutionContext<'a> {
    pub fn new(registry: &'a Registry, toolbox: &'a Toolbox) -> Self {
        ExecutionContext { registry, toolbox, top_n: 3, model_overrides: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call: ToolCall,
    pub result: ToolResult,
    pub selected: RankedCandidate,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub plan: Plan,
    pub calls: Vec<CallRecord>,
    /// `task_<i>.wall_time_ms`, `task_<i>.<diagnostic>`, `tasks_ok`, `tasks_failed`.
    pub metrics: BTreeMap<String, f64>,
}

/// Placeholder written over timing fields by [`mask_timing`].
pub const TIMING_MASK: &str = "<masked>";

/// Replaces every value whose key ends in `wall_time_ms` or `runtime_ms`,
/// at any depth, so the remainder can be byte-compared.
pub fn mask_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if k.ends_with("wall_time_ms") || k.ends_with("runtime_ms") {
                    *v = Value::String(TIMING_MASK.into());
                } else {
                    mask_timing(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(mask_timing),
        _ => {}
    }
}

impl ExecutionTrace {
    /// Canonical JSON with timing fields masked.
    pub fn to_masked_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("traces serialize");
        mask_timing(&mut v);
        crate::canonical::to_string(&v).expect("values serialize")
    }

    pub fn failed_tasks(&self) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(|c| !c.result.is_ok())
    }
}

fn select(plan: &Plan, index: usize, ctx: &ExecutionContext<'_>) -> Result<RankedCandidate, String> {
    let task = &plan.tasks[index];
    let Some(model_id) = ctx.model_overrides.get(&task.task_id) else {
        return rank_models(ctx.registry, task.task_type, task.objective, &plan.query_text, ctx.top_n.max(1))
            .map_err(|e| e.to_string())
            .map(|mut r| r.swap_remove(0));
    };
    let d = ctx.registry.get(model_id).ok_or_else(|| format!("unknown model `{model_id}`"))?;
    if d.task_type != task.task_type {
        return Err(format!("model `{model_id}` does not serve {}", task.task_type));
    }
    // rank among all same-type models so the override stays comparable
    let all = rank_models(ctx.registry, task.task_type, d.objective, &plan.query_text, usize::MAX)
        .map_err(|e| e.to_string())?;
    Ok(all.into_iter().find(|c| &c.model_id == model_id).unwrap_or_else(|| RankedCandidate {
        model_id: model_id.clone(),
        score: cosine_similarity(embed_text(&d.description).as_slice(), embed_text(&plan.query_text).as_slice())
            .unwrap_or(0.0),
        rank: 0,
    }))
}

fn run_task(
    plan: &Plan,
    index: usize,
    ctx: &ExecutionContext<'_>,
    done: &[CallRecord],
    call: &mut ToolCall,
    metrics: &mut BTreeMap<String, f64>,
) -> Result<BTreeMap<String, Value>, String> {
    let task = &plan.tasks[index];
    let descriptor = ctx.registry.get(&call.tool).ok_or_else(|| format!("unknown model `{}`", call.tool))?;
    let accepted: BTreeSet<&str> = descriptor.input_schema.iter().map(|s| s.name.as_str()).collect();

    for slot in &task.slots {
        if accepted.contains(slot.name.as_str()) {
            call.arguments.insert(slot.name.clone(), slot.value.to_json());
        }
    }
    for &dep in &task.depends_on {
        let upstream = &done[dep].result;
        if !upstream.is_ok() {
            return Err(format!("dependency task {dep} failed"));
        }
        for (field, value) in &upstream.output {
            if accepted.contains(field.as_str()) && !call.arguments.contains_key(field) {
                call.arguments.insert(field.clone(), value.clone());
            }
        }
    }
    for s in descriptor.required_slots() {
        if !call.arguments.contains_key(&s.name) {
            return Err(format!("missing required argument `{}`", s.name));
        }
    }

    // dispatch from the wire form, exactly as an external model would see it
    let wire = decode_tool_call(&encode_tool_call(call)).map_err(|e| e.to_string())?;
    let model = ctx.toolbox.get(&wire.tool).ok_or_else(|| format!("no implementation for model `{}`", wire.tool))?;
    let out = model.invoke(&wire.arguments)?;

    let produced: Vec<&str> = out.fields.keys().map(String::as_str).collect();
    let mut expected: Vec<&str> = descriptor.output_schema.iter().map(String::as_str).collect();
    expected.sort_unstable();
    if produced != expected {
        return Err(format!("model `{}` produced fields {produced:?}, expected {expected:?}", wire.tool));
    }
    for (k, v) in &out.diagnostics {
        metrics.insert(format!("task_{index}.{k}"), *v);
    }
    Ok(out.fields)
}

/// Runs every task of a valid plan. See the module docs for the rules.
pub fn execute_plan(plan: &Plan, ctx: &ExecutionContext<'_>) -> Result<ExecutionTrace, ExecError> {
    let mut violations = validate_plan(plan, ctx.registry);
    for (&task_id, model_id) in &ctx.model_overrides {
        if task_id >= plan.tasks.len() || ctx.registry.get(model_id).is_none() {
            violations.push(Violation::NoModelForTask(task_id));
        }
    }
    if !violations.is_empty() {
        return Err(ExecError::PlanInvalid(violations));
    }

    let mut calls: Vec<CallRecord> = Vec::with_capacity(plan.tasks.len());
    let mut metrics = BTreeMap::new();
    for index in 0..plan.tasks.len() {
        let call_id = format!("call_{index}");
        let start = Instant::now();
        let (call, result, selected) = match select(plan, index, ctx) {
            Ok(selected) => {
                let mut call = ToolCall {
                    call_id: call_id.clone(),
                    tool: selected.model_id.clone(),
                    arguments: BTreeMap::new(),
                };
                let result = match run_task(plan, index, ctx, &calls, &mut call, &mut metrics) {
                    Ok(output) => ToolResult::ok(&call_id, output),
                    Err(message) => ToolResult::error(&call_id, message),
                };
                (call, result, selected)
            }
            Err(message) => {
                let selected = RankedCandidate { model_id: String::new(), score: 0.0, rank: 0 };
                let call = ToolCall { call_id: call_id.clone(), tool: String::new(), arguments: BTreeMap::new() };
                (call, ToolResult::error(&call_id, message), selected)
            }
        };
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        metrics.insert(format!("task_{index}.wall_time_ms"), wall_time_ms);
        calls.push(CallRecord { call, result, selected, wall_time_ms });
    }
    let failed = calls.iter().filter(|c| !c.result.is_ok()).count();
    metrics.insert("tasks_ok".into(), (calls.len() - failed) as f64);
    metrics.insert("tasks_failed".into(), failed as f64);
    Ok(ExecutionTrace { plan: plan.clone(), calls, metrics })
}
