//! Tool-call envelopes: the JSON messages exchanged between the coordinator
//! and expert models, always written in canonical form.

use crate::canonical;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub call_id: String,
    /// Model id.
    pub tool: String,
    pub arguments: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolResult {
    pub call_id: String,
    pub status: ToolStatus,
    pub output: BTreeMap<String, Value>,
    pub error_message: Option<String>,
}

impl ToolResult {
    pub fn ok(call_id: &str, output: BTreeMap<String, Value>) -> Self {
        ToolResult { call_id: call_id.to_string(), status: ToolStatus::Ok, output, error_message: None }
    }

    pub fn error(call_id: &str, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.is_empty() {
            message = "unknown error".into();
        }
        ToolResult {
            call_id: call_id.to_string(),
            status: ToolStatus::Error,
            output: BTreeMap::new(),
            error_message: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }
}

/// Decoding failure; `path` names the offending field (`$` for the document).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("envelope parse error at `{path}`: {message}")]
pub struct EnvelopeParseError {
    pub path: String,
    pub message: String,
}

fn parse_error(path: &str, message: impl Into<String>) -> EnvelopeParseError {
    EnvelopeParseError { path: path.to_string(), message: message.into() }
}

pub fn encode_tool_call(call: &ToolCall) -> Vec<u8> {
    canonical::to_vec(call).expect("tool calls always serialize")
}

pub fn decode_tool_call(bytes: &[u8]) -> Result<ToolCall, EnvelopeParseError> {
    let obj = parse_object(bytes)?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "call_id" | "tool" | "arguments") {
            return Err(parse_error(key, "unknown field"));
        }
    }
    let call_id = string_field(&obj, "call_id")?;
    let tool = string_field(&obj, "tool")?;
    let arguments = match obj.get("arguments") {
        Some(Value::Object(m)) => m.clone().into_iter().collect(),
        Some(_) => return Err(parse_error("arguments", "expected an object")),
        None => return Err(parse_error("arguments", "missing field")),
    };
    Ok(ToolCall { call_id, tool, arguments })
}

pub fn encode_tool_result(result: &ToolResult) -> Vec<u8> {
    canonical::to_vec(result).expect("tool results always serialize")
}

pub fn decode_tool_result(bytes: &[u8]) -> Result<ToolResult, EnvelopeParseError> {
    let obj = parse_object(bytes)?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "call_id" | "status" | "output" | "error_message") {
            return Err(parse_error(key, "unknown field"));
        }
    }
    let call_id = string_field(&obj, "call_id")?;
    let status = match obj.get("status").and_then(Value::as_str) {
        Some("ok") => ToolStatus::Ok,
        Some("error") => ToolStatus::Error,
        _ => return Err(parse_error("status", "expected \"ok\" or \"error\"")),
    };
    let output = match obj.get("output") {
        Some(Value::Object(m)) => m.clone().into_iter().collect(),
        _ => return Err(parse_error("output", "expected an object")),
    };
    let error_message = match obj.get("error_message") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(parse_error("error_message", "expected a string or null")),
    };
    if status == ToolStatus::Error && error_message.as_deref().is_none_or(str::is_empty) {
        return Err(parse_error("error_message", "required when status is error"));
    }
    Ok(ToolResult { call_id, status, output, error_message })
}

fn parse_object(bytes: &[u8]) -> Result<Map<String, Value>, EnvelopeParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_error("$", format!("invalid UTF-8: {e}")))?;
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(parse_error("$", "expected a JSON object")),
        Err(e) => Err(parse_error("$", e.to_string())),
    }
}

fn string_field(obj: &Map<String, Value>, name: &str) -> Result<String, EnvelopeParseError> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(parse_error(name, "expected a string")),
        None => Err(parse_error(name, "missing field")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::Matrix;
    use serde_json::json;

    fn sample() -> ToolCall {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.25, -3.5, 1e-300]).unwrap();
        ToolCall {
            call_id: "call_0".into(),
            tool: "maxmin_power_v1".into(),
            arguments: BTreeMap::from([
                ("signal_gain".to_string(), serde_json::to_value(&m).unwrap()),
                ("noise".to_string(), json!(1.0)),
            ]),
        }
    }

    #[test]
    fn matrix_argument_round_trips() {
        let call = sample();
        let bytes = encode_tool_call(&call);
        assert_eq!(decode_tool_call(&bytes).unwrap(), call);
        assert_eq!(encode_tool_call(&decode_tool_call(&bytes).unwrap()), bytes);
        assert_eq!(encode_tool_call(&call), bytes);
        assert!(bytes.starts_with(br#"{"arguments":{"noise":1.0,"signal_gain":{"cols":2,"data":[1.0,0.25,-3.5,1e-300],"rows":2}}"#));
    }

    #[test]
    fn missing_tool_is_reported_by_path() {
        let err = decode_tool_call(br#"{"arguments":{},"call_id":"c"}"#).unwrap_err();
        assert_eq!(err.path, "tool");
        let err = decode_tool_call(br#"{"arguments":{},"call_id":"c","tool":"t","x":1}"#).unwrap_err();
        assert_eq!(err.path, "x");
        let err = decode_tool_call(br#"{"arguments":[],"call_id":"c","tool":"t"}"#).unwrap_err();
        assert_eq!(err.path, "arguments");
        assert_eq!(decode_tool_call(b"[1]").unwrap_err().path, "$");
        assert_eq!(decode_tool_call(b"\xff").unwrap_err().path, "$");
    }

    #[test]
    fn results_round_trip() {
        let ok = ToolResult::ok("call_1", BTreeMap::from([("min_sinr".to_string(), json!(2.5))]));
        assert_eq!(decode_tool_result(&encode_tool_result(&ok)).unwrap(), ok);
        let err = ToolResult::error("call_2", "");
        assert_eq!(err.error_message.as_deref(), Some("unknown error"));
        assert_eq!(decode_tool_result(&encode_tool_result(&err)).unwrap(), err);
        let bad = br#"{"call_id":"c","output":{},"status":"error"}"#;
        assert_eq!(decode_tool_result(bad).unwrap_err().path, "error_message");
    }
}
