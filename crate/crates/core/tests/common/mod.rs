#![allow(dead_code)]

use netorch::canonical;
use netorch::executor::{compose_response, execute_plan, ExecutionContext, ExecutionTrace, Toolbox};
use netorch::planner::{plan_query_mock, GrammarConfig, Payload, Plan};
use netorch::registry::Registry;
use netorch::simenv::{generate_scenario, Geometry, SplitMix64};
use std::path::PathBuf;

pub const E2E_QUERY: &str = "Allocate 100 bandwidth units among 20 users for proportional fairness";
pub const E2E_SEED: u64 = 2024;

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` with the committed golden file, rewriting it instead
/// when `NETORCH_BLESS=1`.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var("NETORCH_BLESS").as_deref() == Ok("1") {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with NETORCH_BLESS=1 to create it)", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!("{} differs from the golden starting at line {}", path.display(), line + 1))
}

pub struct E2e {
    pub plan: Plan,
    pub trace: ExecutionTrace,
    pub transcript: String,
}

/// The mock-backend pipeline on the fixed bandwidth query and seeded scenario.
pub fn e2e_bandwidth() -> E2e {
    let scenario = generate_scenario(1, 20, 96, E2E_SEED, &Geometry::default()).unwrap();
    let payload = Payload::Scenario(Box::new(scenario));
    let plan = plan_query_mock(E2E_QUERY, Some(&payload), &GrammarConfig::default()).unwrap();
    let (reg, tb) = (Registry::builtin(), Toolbox::builtin());
    let trace = execute_plan(&plan, &ExecutionContext::new(&reg, &tb)).unwrap();
    let doc = compose_response(&trace);
    let transcript = format!(
        "== plan\n{}\n== trace\n{}\n== summary\n{}",
        canonical::to_string(&plan).unwrap(),
        trace.to_masked_json(),
        doc.summary_text
    );
    E2e { plan, trace, transcript }
}

/// Log-uniform draw in `[10^lo, 10^hi)`.
pub fn log_uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    10f64.powf(lo + (hi - lo) * rng.next_f64())
}

pub fn shuffle<T>(rng: &mut SplitMix64, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Finite float with a random sign, magnitude spread over many decades,
/// occasionally an exact integer or zero.
pub fn random_number(rng: &mut SplitMix64) -> f64 {
    match rng.next_u64() % 6 {
        0 => 0.0,
        1 => (rng.next_u64() % 10_000) as f64 - 5_000.0,
        _ => {
            let sign = if rng.next_u64() % 2 == 0 { 1.0 } else { -1.0 };
            sign * log_uniform(rng, -12.0, 12.0)
        }
    }
}

pub fn random_ident(rng: &mut SplitMix64, max_len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_-";
    let len = 1 + (rng.next_u64() % max_len as u64) as usize;
    (0..len).map(|_| ALPHABET[(rng.next_u64() % ALPHABET.len() as u64) as usize] as char).collect()
}

/// Numbers, nested numeric arrays (up to depth 3), matrices and strings.
pub fn random_argument(rng: &mut SplitMix64, depth: usize) -> serde_json::Value {
    use serde_json::{json, Value};
    match rng.next_u64() % if depth >= 3 { 2 } else { 5 } {
        0 => json!(random_number(rng)),
        1 => Value::String(random_ident(rng, 12)),
        2 | 3 => {
            let n = (rng.next_u64() % 6) as usize;
            Value::Array((0..n).map(|_| random_argument(rng, depth + 1)).collect())
        }
        _ => {
            let (r, c) = (1 + (rng.next_u64() % 4) as usize, 1 + (rng.next_u64() % 4) as usize);
            let data = (0..r * c).map(|_| random_number(rng)).collect();
            serde_json::to_value(canonical::Matrix::from_vec(r, c, data).unwrap()).unwrap()
        }
    }
}

pub fn random_tool_call(rng: &mut SplitMix64) -> netorch::executor::ToolCall {
    let n = (rng.next_u64() % 6) as usize;
    netorch::executor::ToolCall {
        call_id: format!("call_{}", random_ident(rng, 10)),
        tool: random_ident(rng, 16),
        arguments: (0..n).map(|_| (random_ident(rng, 8), random_argument(rng, 0))).collect(),
    }
}

const VOCABULARY: &[&str] = &[
    "bandwidth", "power", "fairness", "proportional", "sinr", "minimum", "product", "uniform",
    "equal", "split", "water", "filling", "channel", "estimation", "beam", "prediction", "fast",
    "robust", "learned", "analytical", "cells", "users", "allocation", "baseline",
];

pub fn random_text(rng: &mut SplitMix64, words: usize) -> String {
    let n = 1 + (rng.next_u64() % words as u64) as usize;
    (0..n)
        .map(|_| VOCABULARY[(rng.next_u64() % VOCABULARY.len() as u64) as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Descriptors with small download counts and short descriptions, so that
/// score and download ties are common.
pub fn random_descriptors(rng: &mut SplitMix64, n: usize) -> Vec<netorch::registry::ModelDescriptor> {
    use netorch::registry::*;
    (0..n)
        .map(|i| ModelDescriptor {
            model_id: format!("m{:03}_{}", (rng.next_u64() % 1000), i),
            task_type: TaskType::ALL[(rng.next_u64() % TaskType::ALL.len() as u64) as usize],
            objective: Objective::ALL[(rng.next_u64() % Objective::ALL.len() as u64) as usize],
            description: random_text(rng, 4),
            input_schema: vec![SlotSchema { name: "x".into(), kind: SlotKind::Number, required: true }],
            output_schema: vec!["y".into()],
            download_count: rng.next_u64() % 3,
            source: if rng.next_u64() % 2 == 0 { ModelSource::Analytical } else { ModelSource::Learned },
        })
        .collect()
}

pub fn registry_from(descriptors: &[netorch::registry::ModelDescriptor]) -> Registry {
    let mut reg = Registry::new();
    for d in descriptors {
        reg.register_model(d.clone()).unwrap();
    }
    reg
}

/// Random interference-limited power problem with `a_jk ≥ β_own`.
pub fn random_power_problem(rng: &mut SplitMix64, cells: usize, users: usize) -> netorch::solvers::PowerProblem {
    use netorch::canonical::Matrix;
    let n = cells * users;
    let mut cross = Matrix::zeros(cells, n);
    for l in 0..cells {
        for u in 0..n {
            let own = u / users == l;
            cross.set(l, u, if own { log_uniform(rng, -1.0, 0.0) } else { log_uniform(rng, -3.0, -1.0) });
        }
    }
    let mut signal = Matrix::zeros(cells, users);
    for j in 0..cells {
        for k in 0..users {
            signal.set(j, k, cross.get(j, j * users + k) * log_uniform(rng, 0.5, 2.0));
        }
    }
    netorch::solvers::PowerProblem::new(signal, cross, log_uniform(rng, -2.0, 0.0), log_uniform(rng, 0.0, 2.0)).unwrap()
}
