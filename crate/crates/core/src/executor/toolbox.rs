//! Expert-model implementations reachable through tool calls.

use crate::canonical::Matrix;
use crate::solvers::{self, metrics, Allocation, BandwidthProblem, PowerProblem};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// Output fields plus solver diagnostics of one invocation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelOutput {
    pub fields: BTreeMap<String, Value>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// A callable expert. Implementations must be reentrant.
pub trait ExpertModel: Send + Sync {
    fn model_id(&self) -> &str;
    fn invoke(&self, arguments: &BTreeMap<String, Value>) -> Result<ModelOutput, String>;
}

/// Default budget when a power call omits `p_max` (mW).
pub const DEFAULT_P_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    PfBandwidth,
    EqualBandwidth,
    MaxMinPower,
    MaxProdPower,
    UniformPower,
    WaterFillingPower,
}

/// One of the built-in analytical solvers under a model id.
#[derive(Debug, Clone)]
pub struct SolverModel {
    id: String,
    kind: SolverKind,
}

impl SolverModel {
    pub fn new(id: impl Into<String>, kind: SolverKind) -> Self {
        SolverModel { id: id.into(), kind }
    }
}

impl ExpertModel for SolverModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn invoke(&self, args: &BTreeMap<String, Value>) -> Result<ModelOutput, String> {
        match self.kind {
            SolverKind::PfBandwidth | SolverKind::EqualBandwidth => bandwidth(self.kind, args),
            _ => power(self.kind, args),
        }
    }
}

/// Model id → implementation.
#[derive(Default)]
pub struct Toolbox {
    models: BTreeMap<String, Box<dyn ExpertModel>>,
}

impl Toolbox {
    pub fn new() -> Self {
        Toolbox::default()
    }

    /// Implementations for every model in the built-in registry.
    pub fn builtin() -> Self {
        let mut t = Toolbox::new();
        for (id, kind) in [
            ("pf_bandwidth_v1", SolverKind::PfBandwidth),
            ("equal_bandwidth_v1", SolverKind::EqualBandwidth),
            ("maxmin_power_v1", SolverKind::MaxMinPower),
            ("maxprod_power_v1", SolverKind::MaxProdPower),
            ("uniform_power_v1", SolverKind::UniformPower),
            ("waterfilling_power_v1", SolverKind::WaterFillingPower),
        ] {
            t.register(Box::new(SolverModel::new(id, kind)));
        }
        t
    }

    /// Replaces any model with the same id.
    pub fn register(&mut self, model: Box<dyn ExpertModel>) {
        self.models.insert(model.model_id().to_string(), model);
    }

    pub fn get(&self, model_id: &str) -> Option<&dyn ExpertModel> {
        self.models.get(model_id).map(|m| m.as_ref())
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}

fn number(args: &BTreeMap<String, Value>, name: &str) -> Result<Option<f64>, String> {
    match args.get(name) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| format!("argument `{name}` must be a number")),
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("missing required argument `{name}`"))
}

fn number_list(args: &BTreeMap<String, Value>, name: &str) -> Result<Option<Vec<f64>>, String> {
    args.get(name)
        .map(|v| serde_json::from_value(v.clone()).map_err(|_| format!("argument `{name}` must be a list of numbers")))
        .transpose()
}

fn matrix(args: &BTreeMap<String, Value>, name: &str) -> Result<Option<Matrix>, String> {
    args.get(name)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| format!("argument `{name}` is not a matrix: {e}")))
        .transpose()
}

fn count_matches(args: &BTreeMap<String, Value>, name: &str, actual: usize) -> Result<(), String> {
    match number(args, name)? {
        Some(v) if v != actual as f64 => Err(format!("`{name}` = {v} disagrees with the gain data ({actual})")),
        _ => Ok(()),
    }
}

fn bandwidth(kind: SolverKind, args: &BTreeMap<String, Value>) -> Result<ModelOutput, String> {
    let gains = required(number_list(args, "gains")?, "gains")?;
    let total_bw = required(number(args, "total_bw")?, "total_bw")?;
    count_matches(args, "num_users", gains.len())?;
    let problem = BandwidthProblem::new(total_bw, gains).map_err(|e| e.to_string())?;
    let alloc = match kind {
        SolverKind::PfBandwidth => solvers::solve_bandwidth_pf(&problem, solvers::PF_DEFAULT_TOL),
        _ => solvers::solve_bandwidth_equal(&problem),
    }
    .map_err(|e| e.to_string())?;
    let rates: Vec<f64> = problem
        .effective_snr
        .iter()
        .zip(&alloc.values)
        .map(|(c, b)| solvers::user_rate(*c, *b))
        .collect();
    let jain = metrics::jain_index(&rates).map_err(|e| e.to_string())?;
    Ok(ModelOutput {
        fields: BTreeMap::from([
            ("allocation".to_string(), json!(alloc.values)),
            ("jain_index".to_string(), json!(jain)),
            ("objective_value".to_string(), json!(alloc.objective_value)),
            ("rates".to_string(), json!(rates)),
        ]),
        diagnostics: alloc.diagnostics,
    })
}

fn power(kind: SolverKind, args: &BTreeMap<String, Value>) -> Result<ModelOutput, String> {
    let signal = required(matrix(args, "signal_gain")?, "signal_gain")?;
    let cross = required(matrix(args, "cross_gain")?, "cross_gain")?;
    let noise = required(number(args, "noise")?, "noise")?;
    let p_max = number(args, "p_max")?.unwrap_or(DEFAULT_P_MAX);
    count_matches(args, "num_cells", signal.rows())?;
    count_matches(args, "num_users", signal.cols())?;
    let problem = PowerProblem::new(signal, cross, noise, p_max).map_err(|e| e.to_string())?;

    let alloc = match kind {
        SolverKind::MaxMinPower => solvers::solve_power_maxmin(&problem, solvers::MAXMIN_DEFAULT_TOL),
        SolverKind::MaxProdPower => solvers::solve_power_maxprod(&problem, solvers::MAXPROD_DEFAULT_TOL),
        SolverKind::UniformPower => solvers::solve_power_uniform(&problem),
        _ => waterfilling(&problem),
    }
    .map_err(|e| e.to_string())?;

    let powers = Matrix::from_vec(problem.cells, problem.users, alloc.values).expect("solver keeps the shape");
    let sinr = solvers::sinr_all(&problem, &powers).map_err(|e| e.to_string())?;
    let jain = metrics::jain_index(sinr.data()).map_err(|e| e.to_string())?;
    Ok(ModelOutput {
        fields: BTreeMap::from([
            ("geomean_sinr".to_string(), json!(metrics::geometric_mean(sinr.data()))),
            ("jain_index".to_string(), json!(jain)),
            ("min_sinr".to_string(), json!(metrics::min_value(sinr.data()))),
            ("objective_value".to_string(), json!(alloc.objective_value)),
            ("powers".to_string(), serde_json::to_value(&powers).expect("matrix serializes")),
            ("sinr".to_string(), serde_json::to_value(&sinr).expect("matrix serializes")),
        ]),
        diagnostics: alloc.diagnostics,
    })
}

/// Classic per-cell water-filling on the coherent gains, blind to
/// interference; the objective is the resulting sum rate in bit/s/Hz.
fn waterfilling(problem: &PowerProblem) -> solvers::Result<Allocation> {
    let mut p = Vec::with_capacity(problem.total_users());
    for j in 0..problem.cells {
        let cell = solvers::solve_waterfilling(
            problem.signal_gain.row(j),
            problem.noise,
            problem.p_max,
            solvers::WATERFILL_DEFAULT_TOL,
        )?;
        p.extend(cell);
    }
    let powers = Matrix::from_vec(problem.cells, problem.users, p).expect("shape");
    let sinr = solvers::sinr_all(problem, &powers)?;
    let objective_value = sinr.data().iter().map(|s| (1.0 + s).log2()).sum();
    Ok(Allocation { values: powers.into_data(), objective_value, diagnostics: BTreeMap::new() })
}
