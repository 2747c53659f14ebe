//! Gateway to an external chat-completions LLM service, used as the
//! planner's `llm` backend.
//!
//! Requests follow the chat-completions wire format: a `messages` array and
//! a `tools` array of function schemas generated from the registry's input
//! schemas. Request bodies are canonical JSON, so a request is identified by
//! the SHA-256 of its bytes; [`ReplayTransport`] answers from a script keyed
//! by that digest, which is how every code path here runs offline.

mod transport;

pub use transport::{
    request_digest, HttpResponse, HttpTransport, ReplayEntry, ReplayTransport, Transport, TransportError,
};

use crate::canonical;
use crate::executor::ToolCall;
use crate::planner::{complete_slots, validate_plan, GrammarConfig, Payload, Plan, PlanError, Slot, SlotValue, TaskSpec, Violation};
use crate::registry::{Registry, SlotKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::time::Duration;
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "NETORCH_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "NETORCH_LLM_API_KEY";
pub const ENV_MODEL: &str = "NETORCH_LLM_MODEL";

const BACKOFF_BASE_MS: u64 = 500;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error at `{path}`: {message}")]
    Protocol { path: String, message: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("plan rejected: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    PlanRejected(Vec<Violation>),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: "http://127.0.0.1:11434/v1/chat/completions".into(),
            api_key: None,
            model: "mistral".into(),
            timeout_ms: 30_000,
            max_retries: 2,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.endpoint.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("empty endpoint".into()));
        }
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("empty model name".into()));
        }
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Defaults overridden by whichever `NETORCH_LLM_*` variables `lookup` knows.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let mut c = GatewayConfig::default();
        if let Some(v) = lookup(ENV_ENDPOINT) {
            c.endpoint = v;
        }
        if let Some(v) = lookup(ENV_API_KEY) {
            c.api_key = Some(v).filter(|k| !k.is_empty());
        }
        if let Some(v) = lookup(ENV_MODEL) {
            c.model = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
    /// For `tool` messages: the call this message answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Option<Vec<ToolCall>>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into(), tool_calls, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Tool, content: content.into(), tool_calls: None, tool_call_id: Some(call_id.into()) }
    }

    fn to_wire(&self) -> Value {
        let mut m = Map::new();
        m.insert("role".into(), serde_json::to_value(self.role).expect("roles serialize"));
        m.insert("content".into(), Value::String(self.content.clone()));
        if let Some(calls) = &self.tool_calls {
            let wire: Vec<Value> = calls
                .iter()
                .map(|c| {
                    let args = canonical::to_string(&c.arguments).expect("arguments serialize");
                    json!({"id": c.call_id, "type": "function", "function": {"name": c.tool, "arguments": args}})
                })
                .collect();
            m.insert("tool_calls".into(), Value::Array(wire));
        }
        if let Some(id) = &self.tool_call_id {
            m.insert("tool_call_id".into(), Value::String(id.clone()));
        }
        Value::Object(m)
    }
}

fn slot_json_schema(kind: SlotKind) -> Value {
    match kind {
        SlotKind::Number => json!({"type": "number"}),
        SlotKind::NumberList => json!({"type": "array", "items": {"type": "number"}}),
        SlotKind::String => json!({"type": "string"}),
        SlotKind::Matrix => json!({
            "type": "object",
            "description": "row-major matrix",
            "properties": {
                "rows": {"type": "integer", "minimum": 0},
                "cols": {"type": "integer", "minimum": 0},
                "data": {"type": "array", "items": {"type": "number"}}
            },
            "required": ["cols", "data", "rows"],
            "additionalProperties": false
        }),
    }
}

/// One function schema per registered model, in model-id order.
pub fn tool_schemas(registry: &Registry) -> Vec<Value> {
    registry
        .into_iter()
        .map(|d| {
            let properties: Map<String, Value> =
                d.input_schema.iter().map(|s| (s.name.clone(), slot_json_schema(s.kind))).collect();
            let required: Vec<&str> = d.required_slots().map(|s| s.name.as_str()).collect();
            json!({
                "type": "function",
                "function": {
                    "name": d.model_id,
                    "description": d.description,
                    "parameters": {
                        "type": "object",
                        "properties": properties,
                        "required": required,
                        "additionalProperties": false
                    }
                }
            })
        })
        .collect()
}

pub fn build_system_prompt(registry: &Registry) -> String {
    let mut s = String::from(
        "You are the coordinator of a wireless network resource-allocation engine. \
         Decompose the user's request into independent tasks and call exactly one tool per task, \
         filling the arguments you can read from the request. Leave out arguments you cannot \
         determine; the engine fills them from its scenario data. Do not answer numerically yourself.\n\n",
    );
    if registry.is_empty() {
        s.push_str("There are no models available in the repository. Tell the user the request cannot be served.\n");
        return s;
    }
    let _ = writeln!(s, "Models in the repository ({}):", registry.len());
    for d in registry {
        let inputs: Vec<String> = d
            .input_schema
            .iter()
            .map(|i| {
                let need = if i.required { "required" } else { "optional" };
                let kind = serde_json::to_value(i.kind).expect("kinds serialize");
                format!("{} ({}, {need})", i.name, kind.as_str().unwrap_or_default())
            })
            .collect();
        let _ = writeln!(s, "\n- {}", d.model_id);
        let _ = writeln!(s, "  task type: {}; objective: {}", d.task_type, d.objective);
        let _ = writeln!(s, "  description: {}", d.description);
        let _ = writeln!(s, "  inputs: {}", inputs.join(", "));
        let _ = writeln!(s, "  outputs: {}", d.output_schema.join(", "));
    }
    s
}

/// Canonical request body for one completion.
pub fn build_request_body(config: &GatewayConfig, messages: &[ChatMessage], tools: &[Value]) -> Vec<u8> {
    let mut body = Map::new();
    body.insert("model".into(), Value::String(config.model.clone()));
    body.insert("messages".into(), Value::Array(messages.iter().map(ChatMessage::to_wire).collect()));
    if !tools.is_empty() {
        body.insert("tools".into(), Value::Array(tools.to_vec()));
    }
    body.insert("temperature".into(), json!(0));
    canonical::to_vec(&Value::Object(body)).expect("values serialize")
}

fn protocol(path: impl Into<String>, message: impl Into<String>) -> GatewayError {
    GatewayError::Protocol { path: path.into(), message: message.into() }
}

/// Extracts the assistant message from a chat-completions response body.
pub fn parse_response(body: &[u8]) -> Result<ChatMessage, GatewayError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| protocol("$", e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol("choices", "expected an array"))?
        .first()
        .ok_or_else(|| protocol("choices", "empty"))?;
    let msg = choice.get("message").and_then(Value::as_object).ok_or_else(|| protocol("choices[0].message", "expected an object"))?;
    let base = "choices[0].message";
    let content = match msg.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(protocol(format!("{base}.content"), "expected a string")),
    };
    let tool_calls = match msg.get("tool_calls") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .enumerate()
                .map(|(i, item)| parse_tool_call(item, &format!("{base}.tool_calls[{i}]")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(protocol(format!("{base}.tool_calls"), "expected an array")),
    };
    Ok(ChatMessage { role: Role::Assistant, content, tool_calls, tool_call_id: None })
}

fn parse_tool_call(item: &Value, path: &str) -> Result<ToolCall, GatewayError> {
    let call_id = item
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| protocol(format!("{path}.id"), "expected a string"))?;
    let f = item.get("function").ok_or_else(|| protocol(format!("{path}.function"), "missing"))?;
    let tool = f
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| protocol(format!("{path}.function.name"), "expected a string"))?;
    let apath = format!("{path}.function.arguments");
    let args = match f.get("arguments") {
        Some(Value::String(s)) => serde_json::from_str::<Value>(s).map_err(|e| protocol(&apath, e.to_string()))?,
        Some(v @ Value::Object(_)) => v.clone(),
        None => Value::Object(Map::new()),
        Some(_) => return Err(protocol(&apath, "expected a JSON string or object")),
    };
    let Value::Object(arguments) = args else {
        return Err(protocol(&apath, "arguments must be a JSON object"));
    };
    Ok(ToolCall { call_id: call_id.to_string(), tool: tool.to_string(), arguments: arguments.into_iter().collect() })
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    let first = messages.first().ok_or_else(|| GatewayError::InvalidRequest("no messages".into()))?;
    if first.role != Role::System {
        return Err(GatewayError::InvalidRequest("the first message must be the system prompt".into()));
    }
    let mut seen = BTreeSet::new();
    for (i, m) in messages.iter().enumerate() {
        if let Some(calls) = &m.tool_calls {
            seen.extend(calls.iter().map(|c| c.call_id.as_str()));
        }
        if m.role == Role::Tool {
            match m.tool_call_id.as_deref() {
                Some(id) if seen.contains(id) => {}
                other => {
                    return Err(GatewayError::InvalidRequest(format!(
                        "tool message {i} answers unknown call {other:?}"
                    )))
                }
            }
        }
    }
    Ok(())
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// A configured chat-completions client. Immutable once built.
pub struct ChatClient {
    config: GatewayConfig,
    transport: Box<dyn Transport>,
    sleeper: Sleeper,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(config: GatewayConfig, transport: Box<dyn Transport>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(ChatClient { config, transport, sleeper: Box::new(std::thread::sleep) })
    }

    /// Client over real HTTP.
    pub fn http(config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::new(config, Box::new(HttpTransport::new()))
    }

    /// Replaces the backoff sleep (tests record instead of waiting).
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Delay before retry number `attempt + 1`.
    pub fn backoff(attempt: u32) -> Duration {
        Duration::from_millis(BACKOFF_BASE_MS.saturating_mul(1u64 << attempt.min(20)))
    }

    pub fn chat_complete(&self, messages: &[ChatMessage], tools: &[Value]) -> Result<ChatMessage, GatewayError> {
        check_messages(messages)?;
        let body = build_request_body(&self.config, messages, tools);
        let mut headers = Vec::new();
        if let Some(key) = &self.config.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let mut last = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            match self.transport.post_json(&self.config.endpoint, &headers, &body, timeout) {
                Ok(r) if r.status == 401 || r.status == 403 => return Err(GatewayError::Auth { status: r.status }),
                Ok(r) if r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) if !(200..300).contains(&r.status) => {
                    let text = String::from_utf8_lossy(&r.body);
                    return Err(protocol("status", format!("HTTP {}: {}", r.status, text.trim())));
                }
                Ok(r) => return parse_response(&r.body),
                Err(TransportError::Fatal(m)) => {
                    return Err(GatewayError::Transport { attempts: attempt + 1, message: m })
                }
                Err(TransportError::Retryable(m)) => last = m,
            }
            if attempt + 1 < attempts {
                (self.sleeper)(Self::backoff(attempt));
            }
        }
        Err(GatewayError::Transport { attempts, message: last })
    }
}

/// The plan plus the model the LLM chose for each task.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmPlan {
    pub plan: Plan,
    pub tool_choices: Vec<String>,
}

/// The messages and tools `plan_with_llm` sends for `query`.
pub fn planning_request(registry: &Registry, query: &str) -> (Vec<ChatMessage>, Vec<Value>) {
    (vec![ChatMessage::system(build_system_prompt(registry)), ChatMessage::user(query)], tool_schemas(registry))
}

pub fn plan_with_llm(
    client: &ChatClient,
    query: &str,
    registry: &Registry,
    payload: Option<&Payload>,
) -> Result<LlmPlan, GatewayError> {
    plan_with_llm_using(client, query, registry, payload, &GrammarConfig::default())
}

/// One task per returned tool call, in order and without dependencies.
/// Arguments become slots; anything missing is completed exactly as the
/// mock planner would.
pub fn plan_with_llm_using(
    client: &ChatClient,
    query: &str,
    registry: &Registry,
    payload: Option<&Payload>,
    grammar: &GrammarConfig,
) -> Result<LlmPlan, GatewayError> {
    if query.trim().is_empty() {
        return Err(PlanError::EmptyQuery.into());
    }
    let (messages, tools) = planning_request(registry, query);
    let reply = client.chat_complete(&messages, &tools)?;
    let calls = reply.tool_calls.unwrap_or_default();
    if calls.is_empty() {
        return Err(PlanError::UnrecognizedIntent(query.to_string()).into());
    }

    let mut violations = Vec::new();
    let mut tasks = Vec::with_capacity(calls.len());
    let mut tool_choices = Vec::with_capacity(calls.len());
    for (task_id, call) in calls.iter().enumerate() {
        let Some(d) = registry.get(&call.tool) else {
            violations.push(Violation::NoModelForTask(task_id));
            continue;
        };
        let mut slots = BTreeMap::new();
        for (name, value) in &call.arguments {
            match d.slot(name) {
                None => violations.push(Violation::UnknownSlot { task_id, slot: name.clone() }),
                Some(s) => match SlotValue::from_json(value, s.kind) {
                    Ok(v) => {
                        slots.insert(name.clone(), v);
                    }
                    Err(_) => violations.push(Violation::SlotKindMismatch { task_id, slot: name.clone() }),
                },
            }
        }
        let mut task = TaskSpec {
            task_id,
            task_type: d.task_type,
            objective: d.objective,
            slots: slots.into_iter().map(|(name, value)| Slot { name, value }).collect(),
            depends_on: Vec::new(),
        };
        complete_slots(&mut task, payload, grammar)?;
        tasks.push(task);
        tool_choices.push(d.model_id.clone());
    }
    if !violations.is_empty() {
        return Err(GatewayError::PlanRejected(violations));
    }
    let plan = Plan { query_text: query.to_string(), tasks };
    let violations = validate_plan(&plan, registry);
    if !violations.is_empty() {
        return Err(GatewayError::PlanRejected(violations));
    }
    Ok(LlmPlan { plan, tool_choices })
}

/// A chat-completions response carrying `calls` as tool calls; handy for
/// scripting replay files.
pub fn scripted_tool_response(calls: &[ToolCall]) -> Value {
    let msg = ChatMessage::assistant("", Some(calls.to_vec())).to_wire();
    json!({"choices": [{"index": 0, "finish_reason": "tool_calls", "message": msg}]})
}

/// A plain-text chat-completions response.
pub fn scripted_text_response(text: &str) -> Value {
    json!({"choices": [{"index": 0, "finish_reason": "stop", "message": {"role": "assistant", "content": text}}]})
}
