//! LLM planning against a replayed chat-completions exchange, so no model
//! endpoint is needed. Writes the replay file a live session could reuse.
//!
//! cargo run --example llm_replay

use netorch::executor::{compose_response, execute_plan, ExecutionContext, ToolCall, Toolbox};
use netorch::llmgw::{
    build_request_body, plan_with_llm, planning_request, scripted_tool_response, ChatClient, GatewayConfig,
    ReplayTransport,
};
use netorch::registry::Registry;
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = Registry::builtin();
    let config = GatewayConfig::default();
    let query = "Give 12 users a fair share of 50 bandwidth units, and separately run max-min power in 4 cells";

    // what the model would have answered
    let calls = [
        ToolCall {
            call_id: "call_a".into(),
            tool: "pf_bandwidth_v1".into(),
            arguments: [("num_users".into(), json!(12.0)), ("total_bw".into(), json!(50.0))].into_iter().collect(),
        },
        ToolCall {
            call_id: "call_b".into(),
            tool: "maxmin_power_v1".into(),
            arguments: [("num_cells".into(), json!(4.0))].into_iter().collect(),
        },
    ];
    let (messages, tools) = planning_request(&registry, query);
    let mut replay = ReplayTransport::new();
    replay.insert(&build_request_body(&config, &messages, &tools), scripted_tool_response(&calls));
    let path = std::env::temp_dir().join("netorch-replay.jsonl");
    std::fs::write(&path, replay.to_jsonl())?;
    println!("replay file: {} ({} exchange)", path.display(), replay.len());

    let client = ChatClient::new(config, Box::new(ReplayTransport::from_file(&path)?))?;
    let planned = plan_with_llm(&client, query, &registry, None)?;
    println!("tool choices: {:?}", planned.tool_choices);

    let toolbox = Toolbox::builtin();
    let mut ctx = ExecutionContext::new(&registry, &toolbox);
    ctx.model_overrides = planned.tool_choices.into_iter().enumerate().collect();
    let trace = execute_plan(&planned.plan, &ctx)?;
    println!("\n{}", compose_response(&trace).summary_text);
    Ok(())
}
