//! The tool pool: specifications, execution dispatch, the validation
//! harness, and domain-conditioned toolset sampling.

mod backend;
mod registry;
mod sample;
mod validate;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::domain::Domain;

pub use backend::{builtin_backend, BackendFailure, HttpBackend, ToolBackend, BUILTIN_NAMES};
pub use registry::{execute_tool, Registry, RegistryError, ToolHandle, ToolManifest};
pub use sample::{sample_toolset, SampleError, SizeRange};
pub use validate::{
    validate_tool, CheckOutcome, Expectation, ValidationCase, ValidationError, ValidationOptions,
    ValidationReport, ValidationSuite, ValidationVerdict,
};

/// Capability class of a tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolPrimitive {
    /// Acquires external information.
    #[serde(alias = "retrieval")]
    Retrieval,
    /// Performs a deterministic transformation of data.
    #[serde(alias = "processing")]
    Processing,
}

/// Type tag of a declared parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Array => "array",
            ParamType::Object => "object",
        }
    }

    pub fn admits(self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Integer => value.is_i64() || value.is_u64(),
            ParamType::Number => value.is_number(),
            ParamType::Boolean => value.is_boolean(),
            ParamType::Array => value.is_array(),
            ParamType::Object => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    /// Missing tags are accepted by the parser and rejected at registration.
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub param_type: Option<ParamType>,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

impl ParameterSpec {
    pub fn required(name: &str, ty: ParamType) -> Self {
        ParameterSpec {
            name: name.to_string(),
            param_type: Some(ty),
            required: true,
            description: String::new(),
        }
    }

    pub fn optional(name: &str, ty: ParamType) -> Self {
        ParameterSpec {
            required: false,
            ..ParameterSpec::required(name, ty)
        }
    }
}

/// Where a tool's calls are dispatched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    Remote {
        url: String,
        #[serde(default = "default_method")]
        method: String,
        /// Name of an environment variable holding a bearer credential.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        auth_env: Option<String>,
    },
    Builtin {
        name: String,
        #[serde(default)]
        seed: u64,
    },
}

fn default_method() -> String {
    "POST".to_string()
}

impl Backend {
    pub fn builtin(name: &str) -> Self {
        Backend::Builtin {
            name: name.to_string(),
            seed: 0,
        }
    }
}

/// Predicate deciding whether two payloads of the same call agree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Consistency {
    #[default]
    ByteEqual,
    /// Compare JSON payloads after dropping the named object fields at any
    /// depth. Non-JSON payloads fall back to byte equality.
    IgnoreFields { fields: Vec<String> },
}

impl Consistency {
    pub fn agrees(&self, a: &str, b: &str) -> bool {
        match self {
            Consistency::ByteEqual => a == b,
            Consistency::IgnoreFields { fields } => {
                match (serde_json::from_str::<Value>(a), serde_json::from_str::<Value>(b)) {
                    (Ok(mut x), Ok(mut y)) => {
                        strip_fields(&mut x, fields);
                        strip_fields(&mut y, fields);
                        x == y
                    }
                    _ => a == b,
                }
            }
        }
    }
}

fn strip_fields(value: &mut Value, fields: &[String]) {
    match value {
        Value::Object(map) => {
            for f in fields {
                map.remove(f);
            }
            map.values_mut().for_each(|v| strip_fields(v, fields));
        }
        Value::Array(items) => items.iter_mut().for_each(|v| strip_fields(v, fields)),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub domain: Domain,
    pub primitive: ToolPrimitive,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "is_default_consistency")]
    pub consistency: Consistency,
}

fn is_default_consistency(c: &Consistency) -> bool {
    *c == Consistency::ByteEqual
}

impl ToolSpec {
    pub fn new(name: &str, domain: Domain, primitive: ToolPrimitive, backend: Backend) -> Self {
        ToolSpec {
            name: name.to_string(),
            domain,
            primitive,
            description: String::new(),
            parameters: Vec::new(),
            backend,
            consistency: Consistency::ByteEqual,
        }
    }

    pub fn with_description(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    pub fn with_param(mut self, param: ParameterSpec) -> Self {
        self.parameters.push(param);
        self
    }

    pub fn with_consistency(mut self, consistency: Consistency) -> Self {
        self.consistency = consistency;
        self
    }

    /// JSON-schema object describing the parameters, as declared to chat
    /// policies.
    pub fn json_schema(&self) -> Value {
        let mut props = Map::new();
        let mut required = Vec::new();
        for p in &self.parameters {
            let mut prop = Map::new();
            if let Some(ty) = p.param_type {
                prop.insert("type".into(), Value::String(ty.as_str().into()));
            }
            if !p.description.is_empty() {
                prop.insert("description".into(), Value::String(p.description.clone()));
            }
            props.insert(p.name.clone(), Value::Object(prop));
            if p.required {
                required.push(Value::String(p.name.clone()));
            }
        }
        serde_json::json!({
            "type": "object",
            "properties": props,
            "required": required,
        })
    }

    /// Checks `args` against the declared parameters: required parameters
    /// first, then type tags, then unknown names.
    pub fn check_arguments(&self, args: &Map<String, Value>) -> Result<(), String> {
        for p in self.parameters.iter().filter(|p| p.required) {
            if !args.contains_key(&p.name) {
                return Err(format!("missing required parameter `{}`", p.name));
            }
        }
        for (name, value) in args {
            let Some(p) = self.parameters.iter().find(|p| &p.name == name) else {
                return Err(format!("unknown parameter `{name}`"));
            };
            if let Some(ty) = p.param_type {
                if !ty.admits(value) {
                    return Err(format!(
                        "parameter `{name}` expects {}, got {}",
                        ty.as_str(),
                        json_kind(value)
                    ));
                }
            }
        }
        Ok(())
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// One tool invocation emitted by a policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(call_id: &str, tool_name: &str, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        ToolCall {
            call_id: call_id.to_string(),
            tool_name: tool_name.to_string(),
            arguments,
        }
    }

    /// Compact rendering `name({"k":v})` used in digests.
    pub fn render(&self) -> String {
        format!(
            "{}({})",
            self.tool_name,
            serde_json::to_string(&self.arguments).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservationStatus {
    Ok,
    ToolError,
    TransportError,
    Timeout,
}

/// Marker stored as the payload of a successful call that returned nothing.
pub const EMPTY_RESULT_MARKER: &str = "[empty result]";

/// Result of executing one [`ToolCall`]. Latency is measured but never
/// serialized, so stored records stay byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub call_id: String,
    pub status: ObservationStatus,
    pub payload: String,
    #[serde(skip)]
    pub latency: Duration,
}

impl Observation {
    pub fn is_ok(&self) -> bool {
        self.status == ObservationStatus::Ok
    }

    pub(crate) fn failure(call_id: &str, status: ObservationStatus, message: String) -> Self {
        debug_assert!(status != ObservationStatus::Ok);
        Observation {
            call_id: call_id.to_string(),
            status,
            payload: message,
            latency: Duration::ZERO,
        }
    }
}

/// Per-call execution limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallLimits {
    pub timeout: Duration,
    pub max_payload: usize,
}

pub const DEFAULT_MAX_PAYLOAD: usize = 16 * 1024;

impl Default for CallLimits {
    fn default() -> Self {
        CallLimits {
            timeout: Duration::from_secs(30),
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

/// Truncates `payload` to at most `max` bytes (on a char boundary) and
/// appends an explicit marker when anything was cut.
pub fn truncate_payload(payload: String, max: usize) -> String {
    if payload.len() <= max {
        return payload;
    }
    let mut cut = max;
    while !payload.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n[truncated: {} of {} bytes shown]", &payload[..cut], cut, payload.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn add_spec() -> ToolSpec {
        ToolSpec::new("mock_add", Domain::General, ToolPrimitive::Processing, Backend::builtin("mock_add"))
            .with_param(ParameterSpec::required("a", ParamType::Number))
            .with_param(ParameterSpec::required("b", ParamType::Number))
    }

    #[test]
    fn argument_check_names_missing_parameter() {
        let spec = add_spec();
        let args = json!({"a": 1}).as_object().unwrap().clone();
        let err = spec.check_arguments(&args).unwrap_err();
        assert!(err.contains("`b`"), "{err}");
    }

    #[test]
    fn argument_check_rejects_type_mismatch_and_unknown() {
        let spec = add_spec();
        let bad_type = json!({"a": 1, "b": "x"}).as_object().unwrap().clone();
        assert!(spec.check_arguments(&bad_type).unwrap_err().contains("expects number"));
        let unknown = json!({"a": 1, "b": 2, "c": 3}).as_object().unwrap().clone();
        assert!(spec.check_arguments(&unknown).unwrap_err().contains("unknown"));
    }

    #[test]
    fn truncation_adds_marker_on_char_boundary() {
        let s = "é".repeat(10); // 20 bytes
        let t = truncate_payload(s.clone(), 5);
        assert!(t.starts_with("éé\n[truncated: 4 of 20 bytes shown]"));
        assert_eq!(truncate_payload(s.clone(), 20), s);
    }

    #[test]
    fn ignore_fields_predicate_skips_nested_timestamps() {
        let c = Consistency::IgnoreFields { fields: vec!["ts".into()] };
        assert!(c.agrees(r#"{"v":1,"ts":5,"x":{"ts":1}}"#, r#"{"v":1,"ts":9,"x":{"ts":2}}"#));
        assert!(!c.agrees(r#"{"v":1}"#, r#"{"v":2}"#));
        assert!(!Consistency::ByteEqual.agrees("a", "b"));
    }

    #[test]
    fn schema_lists_required_parameters() {
        let schema = add_spec().json_schema();
        assert_eq!(schema["required"], json!(["a", "b"]));
        assert_eq!(schema["properties"]["a"]["type"], "number");
    }
}
