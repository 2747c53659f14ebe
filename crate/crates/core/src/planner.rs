//! Task planning: turn a query (plus optional structured payload) into an
//! ordered list of typed sub-tasks with filled slots.
//!
//! The mock backend is a fixed keyword grammar, evaluated case-insensitively:
//!
//! * the query is split into clauses on the word `and`; a clause mentioning
//!   `bandwidth` becomes a bandwidth task, otherwise one mentioning `power`
//!   becomes a power task, and any other clause is folded into the previous
//!   one;
//! * objectives are matched in order: max-product SINR (power task with
//!   `product`/`proportional` next to `sinr`), proportional fairness,
//!   max-min (`max-min`, `minimum sinr`, `worst`), water-filling, then the
//!   equal/uniform baselines; the clause is searched before the whole query,
//!   and a task type's default objective applies when nothing matches;
//! * `<n> bandwidth units`, `<n> users` and `<n> cells` fill numeric slots;
//! * payload fields are copied into slots by name, and a scenario payload is
//!   expanded into the gains each task type consumes. Without a payload a
//!   scenario is generated from the parsed counts and the grammar seed.

use crate::canonical::Matrix;
use crate::llmgw::ChatClient;
use crate::registry::{ModelDescriptor, Objective, Registry, SlotKind, TaskType};
use crate::simenv::{self, Geometry, Scenario};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Number(f64),
    NumberList(Vec<f64>),
    Matrix(Matrix),
    Text(String),
}

impl SlotValue {
    pub fn kind(&self) -> SlotKind {
        match self {
            SlotValue::Number(_) => SlotKind::Number,
            SlotValue::NumberList(_) => SlotKind::NumberList,
            SlotValue::Matrix(_) => SlotKind::Matrix,
            SlotValue::Text(_) => SlotKind::String,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("slot values serialize")
    }

    /// Interprets a JSON value as a slot of the expected kind.
    pub fn from_json(value: &Value, kind: SlotKind) -> Result<Self, String> {
        let parsed = match kind {
            SlotKind::Number => value.as_f64().map(SlotValue::Number),
            SlotKind::NumberList => serde_json::from_value::<Vec<f64>>(value.clone())
                .ok()
                .map(SlotValue::NumberList),
            SlotKind::Matrix => serde_json::from_value::<Matrix>(value.clone())
                .ok()
                .map(SlotValue::Matrix),
            SlotKind::String => value.as_str().map(|s| SlotValue::Text(s.to_string())),
        };
        parsed.ok_or_else(|| format!("expected {kind:?}, got {value}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub name: String,
    pub value: SlotValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: usize,
    pub task_type: TaskType,
    pub objective: Objective,
    /// Sorted by name.
    pub slots: Vec<Slot>,
    pub depends_on: Vec<usize>,
}

impl TaskSpec {
    pub fn slot(&self, name: &str) -> Option<&SlotValue> {
        self.slots.iter().find(|s| s.name == name).map(|s| &s.value)
    }

    fn set_slot(&mut self, name: &str, value: SlotValue) {
        match self.slots.iter_mut().find(|s| s.name == name) {
            Some(s) => s.value = value,
            None => {
                self.slots.push(Slot { name: name.to_string(), value });
                self.slots.sort_by(|a, b| a.name.cmp(&b.name));
            }
        }
    }

    fn number(&self, name: &str) -> Option<f64> {
        match self.slot(name) {
            Some(SlotValue::Number(v)) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub query_text: String,
    pub tasks: Vec<TaskSpec>,
}

/// Structured data attached to a query.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Slots(BTreeMap<String, Value>),
    Scenario(Box<Scenario>),
}

impl Payload {
    /// A scenario document becomes [`Payload::Scenario`]; any other JSON
    /// object is a map of slot values.
    pub fn from_json(value: Value) -> Result<Self, PlanError> {
        if let Ok(s) = serde_json::from_value::<Scenario>(value.clone()) {
            return Ok(Payload::Scenario(Box::new(s)));
        }
        match value {
            Value::Object(map) => Ok(Payload::Slots(map.into_iter().collect())),
            other => Err(PlanError::InvalidPayload(format!(
                "payload must be a JSON object, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("empty query")]
    EmptyQuery,
    #[error("UnrecognizedIntent: no task matched query `{0}`")]
    UnrecognizedIntent(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Violation {
    NoModelForTask(usize),
    MissingSlot { task_id: usize, slot: String },
    UnknownSlot { task_id: usize, slot: String },
    SlotKindMismatch { task_id: usize, slot: String },
    DanglingDependency { task_id: usize, depends_on: usize },
    ForwardDependency { task_id: usize, depends_on: usize },
    TaskIdOutOfOrder { index: usize, task_id: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoModelForTask(t) => write!(f, "NoModelForTask({t})"),
            Violation::MissingSlot { task_id, slot } => write!(f, "MissingSlot({task_id}: {slot})"),
            Violation::UnknownSlot { task_id, slot } => write!(f, "UnknownSlot({task_id}: {slot})"),
            Violation::SlotKindMismatch { task_id, slot } => {
                write!(f, "SlotKindMismatch({task_id}: {slot})")
            }
            Violation::DanglingDependency { task_id, depends_on } => {
                write!(f, "DanglingDependency({task_id}→{depends_on})")
            }
            Violation::ForwardDependency { task_id, depends_on } => {
                write!(f, "ForwardDependency({task_id}→{depends_on})")
            }
            Violation::TaskIdOutOfOrder { index, task_id } => {
                write!(f, "TaskIdOutOfOrder(index {index} has id {task_id})")
            }
        }
    }
}

/// Which planner produces the plan.
pub enum Backend<'a> {
    Mock,
    Llm { client: &'a ChatClient, registry: &'a Registry },
}

/// Knobs of the mock grammar's slot completion.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarConfig {
    pub seed: u64,
    pub antennas: usize,
    pub geometry: Geometry,
    pub default_total_bw: f64,
    pub default_users: usize,
    /// Transmit power (mW) used to turn a scenario's gains into effective SNRs.
    pub per_ue_power: f64,
    /// Noise spectral density per bandwidth unit, relative to the gains' normalization.
    pub noise_density: f64,
    /// Cell whose UEs a bandwidth task allocates over.
    pub bandwidth_cell: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            seed: 0,
            antennas: 96,
            geometry: Geometry::default(),
            default_total_bw: 100.0,
            default_users: 10,
            per_ue_power: 100.0,
            noise_density: 1.0,
            bandwidth_cell: 0,
        }
    }
}

/// Slots a task type can carry: `(name, kind, required)`.
pub fn slot_catalog(task_type: TaskType) -> &'static [(&'static str, SlotKind, bool)] {
    match task_type {
        TaskType::BandwidthAllocation => &[
            ("gains", SlotKind::NumberList, true),
            ("num_users", SlotKind::Number, false),
            ("total_bw", SlotKind::Number, true),
        ],
        TaskType::PowerAllocation => &[
            ("cross_gain", SlotKind::Matrix, true),
            ("noise", SlotKind::Number, true),
            ("num_cells", SlotKind::Number, false),
            ("num_users", SlotKind::Number, false),
            ("p_max", SlotKind::Number, false),
            ("signal_gain", SlotKind::Matrix, true),
        ],
        TaskType::ChannelEstimation | TaskType::BeamPrediction | TaskType::Baseline => &[],
    }
}

pub fn plan_query(query: &str, payload: Option<&Payload>, backend: &Backend<'_>) -> Result<Plan, PlanError> {
    plan_query_with(query, payload, backend, &GrammarConfig::default())
}

/// [`plan_query`] with explicit slot-completion settings, shared by both backends.
pub fn plan_query_with(
    query: &str,
    payload: Option<&Payload>,
    backend: &Backend<'_>,
    grammar: &GrammarConfig,
) -> Result<Plan, PlanError> {
    match backend {
        Backend::Mock => plan_query_mock(query, payload, grammar),
        Backend::Llm { client, registry } => {
            match crate::llmgw::plan_with_llm_using(client, query, registry, payload, grammar) {
                Ok(p) => Ok(p.plan),
                Err(crate::llmgw::GatewayError::Plan(e)) => Err(e),
                Err(e) => Err(PlanError::Backend(e.to_string())),
            }
        }
    }
}

struct Rules {
    and_split: Regex,
    bandwidth_units: Regex,
    users: Regex,
    cells: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        and_split: Regex::new(r"\s+and\s+").unwrap(),
        bandwidth_units: Regex::new(r"(\d+(?:\.\d+)?)\s*bandwidth\s+units?").unwrap(),
        users: Regex::new(r"(\d+)\s*(?:users?|ues?|user equipments?)\b").unwrap(),
        cells: Regex::new(r"(\d+)\s*cells?\b").unwrap(),
    })
}

fn detect_task(text: &str) -> Option<TaskType> {
    if text.contains("bandwidth") {
        Some(TaskType::BandwidthAllocation)
    } else if text.contains("power") {
        Some(TaskType::PowerAllocation)
    } else {
        None
    }
}

fn detect_objective(text: &str, task: TaskType) -> Option<Objective> {
    let power = task == TaskType::PowerAllocation;
    let has = |w: &str| text.contains(w);
    if power && (has("product") || has("proportional")) && has("sinr") {
        return Some(Objective::MaxProdSinr);
    }
    if has("proportional fairness") || has("proportionally fair") || has("proportional-fair") {
        return Some(if power { Objective::MaxProdSinr } else { Objective::ProportionalFairness });
    }
    if has("max-min") || has("maxmin") || has("minimum sinr") || has("worst") {
        return Some(Objective::MaxMinSinr);
    }
    if power && (has("water-filling") || has("water filling") || has("waterfilling")) {
        return Some(Objective::WaterFilling);
    }
    if has("equal") || has("uniform") {
        return Some(if power { Objective::UniformPower } else { Objective::EqualSplit });
    }
    None
}

fn default_objective(task: TaskType) -> Objective {
    match task {
        TaskType::BandwidthAllocation => Objective::ProportionalFairness,
        TaskType::PowerAllocation => Objective::MaxMinSinr,
        _ => Objective::None,
    }
}

fn capture_number(re: &Regex, text: &str) -> Option<f64> {
    re.captures(text).and_then(|c| c[1].parse().ok())
}

/// The deterministic grammar planner.
pub fn plan_query_mock(query: &str, payload: Option<&Payload>, config: &GrammarConfig) -> Result<Plan, PlanError> {
    if query.trim().is_empty() {
        return Err(PlanError::EmptyQuery);
    }
    let lower = query.to_lowercase();
    let r = rules();

    let mut groups: Vec<(TaskType, String)> = Vec::new();
    let mut pending = String::new();
    for clause in r.and_split.split(&lower) {
        match detect_task(clause) {
            Some(t) => {
                let text = if pending.is_empty() { clause.to_string() } else { format!("{pending} {clause}") };
                pending.clear();
                groups.push((t, text));
            }
            None => match groups.last_mut() {
                Some((_, text)) => {
                    text.push_str(" and ");
                    text.push_str(clause);
                }
                None => {
                    pending.push_str(clause);
                }
            },
        }
    }
    if groups.is_empty() {
        return Err(PlanError::UnrecognizedIntent(query.to_string()));
    }

    let mut tasks = Vec::with_capacity(groups.len());
    for (task_id, (task_type, text)) in groups.into_iter().enumerate() {
        let objective = detect_objective(&text, task_type)
            .or_else(|| detect_objective(&lower, task_type))
            .unwrap_or_else(|| default_objective(task_type));
        let mut task = TaskSpec { task_id, task_type, objective, slots: Vec::new(), depends_on: Vec::new() };
        let grab = |re: &Regex| capture_number(re, &text).or_else(|| capture_number(re, &lower));
        if task_type == TaskType::BandwidthAllocation {
            if let Some(b) = grab(&r.bandwidth_units) {
                task.set_slot("total_bw", SlotValue::Number(b));
            }
        }
        if let Some(k) = grab(&r.users) {
            task.set_slot("num_users", SlotValue::Number(k));
        }
        if task_type == TaskType::PowerAllocation {
            if let Some(l) = grab(&r.cells) {
                task.set_slot("num_cells", SlotValue::Number(l));
            }
        }
        complete_slots(&mut task, payload, config)?;
        tasks.push(task);
    }
    Ok(Plan { query_text: query.to_string(), tasks })
}

/// Fills a task's slots from the payload, then from a generated scenario and
/// grammar defaults. Slots already present are kept.
pub fn complete_slots(task: &mut TaskSpec, payload: Option<&Payload>, config: &GrammarConfig) -> Result<(), PlanError> {
    let catalog = slot_catalog(task.task_type);
    let mut scenario: Option<Scenario> = None;
    match payload {
        Some(Payload::Slots(map)) => {
            for (name, kind, _) in catalog {
                if task.slot(name).is_some() {
                    continue;
                }
                if let Some(v) = map.get(*name) {
                    let value = SlotValue::from_json(v, *kind)
                        .map_err(|e| PlanError::InvalidPayload(format!("slot `{name}`: {e}")))?;
                    task.set_slot(name, value);
                }
            }
        }
        Some(Payload::Scenario(s)) => scenario = Some((**s).clone()),
        None => {}
    }

    let needs_gains = match task.task_type {
        TaskType::BandwidthAllocation => task.slot("gains").is_none(),
        TaskType::PowerAllocation => task.slot("signal_gain").is_none() || task.slot("cross_gain").is_none(),
        _ => false,
    };
    if needs_gains && scenario.is_none() {
        let count = |name: &str, default: usize| -> Result<usize, PlanError> {
            match task.number(name) {
                None => Ok(default),
                Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= 100_000.0 => Ok(v as usize),
                Some(v) => Err(PlanError::InvalidPayload(format!("`{name}` must be a positive integer, got {v}"))),
            }
        };
        let users = count("num_users", config.default_users)?;
        let cells = if task.task_type == TaskType::PowerAllocation { count("num_cells", 1)? } else { 1 };
        scenario = Some(
            simenv::generate_scenario(cells, users, config.antennas, config.seed, &config.geometry)
                .map_err(|e| PlanError::InvalidPayload(e.to_string()))?,
        );
    }

    match task.task_type {
        TaskType::BandwidthAllocation => {
            if task.slot("total_bw").is_none() {
                task.set_slot("total_bw", SlotValue::Number(config.default_total_bw));
            }
            if let (true, Some(s)) = (task.slot("gains").is_none(), &scenario) {
                let total = task.number("total_bw").unwrap_or(config.default_total_bw);
                let cell = config.bandwidth_cell.min(s.cells - 1);
                let problem = simenv::scenario_to_bandwidth_problem(s, cell, total, config.per_ue_power, config.noise_density)
                    .map_err(|e| PlanError::InvalidPayload(e.to_string()))?;
                task.set_slot("gains", SlotValue::NumberList(problem.effective_snr));
            }
        }
        TaskType::PowerAllocation => {
            if let Some(s) = &scenario {
                let signal: Vec<f64> = s.own_gains().iter().map(|b| s.antennas as f64 * b).collect();
                if task.slot("signal_gain").is_none() {
                    let m = Matrix::from_vec(s.cells, s.users, signal).expect("scenario shape");
                    task.set_slot("signal_gain", SlotValue::Matrix(m));
                }
                if task.slot("cross_gain").is_none() {
                    task.set_slot("cross_gain", SlotValue::Matrix(s.large_scale_gain.clone()));
                }
            }
            if task.slot("noise").is_none() {
                task.set_slot("noise", SlotValue::Number(1.0));
            }
        }
        _ => {}
    }
    Ok(())
}

/// The models a task may be dispatched to: its task type, narrowed to the
/// objective when any model matches it.
pub fn candidate_models<'r>(registry: &'r Registry, task_type: TaskType, objective: Objective) -> Vec<&'r ModelDescriptor> {
    let by_task = registry.list_models(Some(task_type));
    let exact: Vec<&ModelDescriptor> = by_task.iter().copied().filter(|m| m.objective == objective).collect();
    if exact.is_empty() {
        by_task
    } else {
        exact
    }
}

/// Every reason the plan cannot run against `registry`; empty means
/// executable.
pub fn validate_plan(plan: &Plan, registry: &Registry) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = plan.tasks.len();
    for (index, task) in plan.tasks.iter().enumerate() {
        let id = task.task_id;
        if id != index {
            out.push(Violation::TaskIdOutOfOrder { index, task_id: id });
        }
        for &dep in &task.depends_on {
            if dep >= n {
                out.push(Violation::DanglingDependency { task_id: id, depends_on: dep });
            } else if dep >= index {
                out.push(Violation::ForwardDependency { task_id: id, depends_on: dep });
            }
        }
        let models = candidate_models(registry, task.task_type, task.objective);
        if models.is_empty() {
            out.push(Violation::NoModelForTask(id));
            continue;
        }
        let derivable: BTreeSet<&str> = task
            .depends_on
            .iter()
            .filter_map(|&d| plan.tasks.get(d))
            .flat_map(|dep| candidate_models(registry, dep.task_type, dep.objective))
            .flat_map(|m| m.output_schema.iter().map(String::as_str))
            .collect();
        let mut required = BTreeSet::new();
        let mut known: BTreeMap<&str, SlotKind> = BTreeMap::new();
        for m in &models {
            for s in &m.input_schema {
                known.insert(&s.name, s.kind);
                if s.required {
                    required.insert(s.name.as_str());
                }
            }
        }
        for name in required {
            if task.slot(name).is_none() && !derivable.contains(name) {
                out.push(Violation::MissingSlot { task_id: id, slot: name.to_string() });
            }
        }
        for slot in &task.slots {
            match known.get(slot.name.as_str()) {
                None => out.push(Violation::UnknownSlot { task_id: id, slot: slot.name.clone() }),
                Some(kind) if *kind != slot.value.kind() => {
                    out.push(Violation::SlotKindMismatch { task_id: id, slot: slot.name.clone() })
                }
                _ => {}
            }
        }
    }
    out
}
