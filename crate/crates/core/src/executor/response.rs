use super::{ExecutionTrace, ToolResult};
use crate::canonical::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDocument {
    pub summary_text: String,
    pub structured_results: Vec<ToolResult>,
    pub metrics: BTreeMap<String, f64>,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn list(output: &BTreeMap<String, Value>, key: &str) -> Option<Vec<f64>> {
    output.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn matrix(output: &BTreeMap<String, Value>, key: &str) -> Option<Matrix> {
    output.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn scalar_lines(out: &mut String, output: &BTreeMap<String, Value>, keys: &[&str]) {
    for key in keys {
        if let Some(v) = output.get(*key).and_then(Value::as_f64) {
            let _ = writeln!(out, "  {key}: {}", fmt_num(v));
        }
    }
}

fn bandwidth_table(out: &mut String, output: &BTreeMap<String, Value>) -> bool {
    let (Some(alloc), Some(rates)) = (list(output, "allocation"), list(output, "rates")) else {
        return false;
    };
    let _ = writeln!(out, "  {:>4}  {:>14}  {:>14}", "ue", "bandwidth", "rate");
    for (k, (b, r)) in alloc.iter().zip(&rates).enumerate() {
        let _ = writeln!(out, "  {k:>4}  {:>14}  {:>14}", fmt_num(*b), fmt_num(*r));
    }
    let _ = writeln!(out, "  {:>4}  {:>14}", "sum", fmt_num(alloc.iter().sum()));
    scalar_lines(out, output, &["objective_value", "jain_index"]);
    true
}

fn power_table(out: &mut String, output: &BTreeMap<String, Value>) -> bool {
    let (Some(p), Some(sinr)) = (matrix(output, "powers"), matrix(output, "sinr")) else {
        return false;
    };
    let _ = writeln!(out, "  {:>4}  {:>4}  {:>14}  {:>14}", "cell", "ue", "power", "sinr");
    for j in 0..p.rows() {
        for k in 0..p.cols() {
            let _ = writeln!(out, "  {j:>4}  {k:>4}  {:>14}  {:>14}", fmt_num(p.get(j, k)), fmt_num(sinr.get(j, k)));
        }
    }
    scalar_lines(out, output, &["objective_value", "min_sinr", "geomean_sinr", "jain_index"]);
    true
}

/// Deterministic plain-text report of a trace. Timing is deliberately left
/// out of the text so identical traces render identically.
pub fn compose_response(trace: &ExecutionTrace) -> ResponseDocument {
    let mut s = String::new();
    let _ = writeln!(s, "Query: {}", trace.plan.query_text);
    let _ = writeln!(s, "Plan: {} task(s)", trace.plan.tasks.len());
    for (task, rec) in trace.plan.tasks.iter().zip(&trace.calls) {
        let _ = writeln!(s);
        let state = if rec.result.is_ok() { "ok" } else { "FAILED" };
        let _ = writeln!(
            s,
            "Task {} [{} / {}] -> {}: {state}",
            task.task_id, task.task_type, task.objective, rec.call.tool
        );
        if !task.depends_on.is_empty() {
            let deps: Vec<String> = task.depends_on.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "  depends on: {}", deps.join(", "));
        }
        let _ = writeln!(s, "  selection score: {} (rank {})", fmt_num(rec.selected.score), rec.selected.rank);
        if let Some(msg) = &rec.result.error_message {
            let _ = writeln!(s, "  error: {msg}");
            continue;
        }
        if !bandwidth_table(&mut s, &rec.result.output) && !power_table(&mut s, &rec.result.output) {
            for (k, v) in &rec.result.output {
                let _ = writeln!(s, "  {k}: {v}");
            }
        }
    }
    let failed: Vec<String> = trace.failed_tasks().map(|c| c.call.call_id.clone()).collect();
    let _ = writeln!(s);
    let _ = writeln!(s, "Completed: {} ok, {} failed", trace.calls.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        let _ = writeln!(s, "Failed calls: {}", failed.join(", "));
    }
    ResponseDocument {
        summary_text: s,
        structured_results: trace.calls.iter().map(|c| c.result.clone()).collect(),
        metrics: trace.metrics.clone(),
    }
}
