//! Natural-language query through the mock planner, selector, executor and
//! response composer.
//!
//! cargo run --example orchestrate_query -- "allocate power for max-min sinr in 4 cells with 3 users"

use netorch::canonical;
use netorch::executor::{compose_response, execute_plan, ExecutionContext, Toolbox};
use netorch::planner::{plan_query, Backend};
use netorch::registry::Registry;
use netorch::selector::rank_models;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Allocate 100 bandwidth units among 8 users for proportional fairness and set power for minimum sinr in 4 cells".into());
    let registry = Registry::builtin();
    let toolbox = Toolbox::builtin();

    let plan = plan_query(&query, None, &Backend::Mock)?;
    println!("plan: {}", canonical::to_string(&plan)?);
    for task in &plan.tasks {
        let ranked = rank_models(&registry, task.task_type, task.objective, &query, 3)?;
        let names: Vec<String> = ranked.iter().map(|c| format!("{} ({:.3})", c.model_id, c.score)).collect();
        println!("task {} candidates: {}", task.task_id, names.join(", "));
    }

    let trace = execute_plan(&plan, &ExecutionContext::new(&registry, &toolbox))?;
    println!("\n{}", compose_response(&trace).summary_text);
    Ok(())
}
