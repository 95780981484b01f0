use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::CallLimits;

/// Failure modes a backend may report. Each maps onto a non-`Ok`
/// observation status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendFailure {
    Tool(String),
    Transport(String),
    Timeout(String),
}

/// Something that can answer tool calls. Implementations must be safe to
/// invoke from many threads at once.
pub trait ToolBackend: Send + Sync {
    fn invoke(
        &self,
        tool: &str,
        args: &Map<String, Value>,
        limits: &CallLimits,
    ) -> Result<String, BackendFailure>;
}

impl<F> ToolBackend for F
where
    F: Fn(&str, &Map<String, Value>, &CallLimits) -> Result<String, BackendFailure> + Send + Sync,
{
    fn invoke(&self, tool: &str, args: &Map<String, Value>, limits: &CallLimits) -> Result<String, BackendFailure> {
        self(tool, args, limits)
    }
}

/// Names accepted by [`builtin_backend`].
pub const BUILTIN_NAMES: &[&str] = &[
    "mock_add",
    "mock_echo",
    "mock_empty",
    "mock_fail",
    "mock_lookup",
    "mock_transform",
    "mock_sleep",
    "mock_inflight_counter",
    "mock_session_token",
];

/// Instantiates a named builtin mock. Stateful mocks get fresh state per
/// call to this function, i.e. per registered tool.
pub fn builtin_backend(name: &str, seed: u64) -> Option<Arc<dyn ToolBackend>> {
    let backend: Arc<dyn ToolBackend> = match name {
        "mock_add" => Arc::new(|_: &str, args: &Map<String, Value>, _: &CallLimits| add(args)),
        "mock_echo" => Arc::new(|_: &str, args: &Map<String, Value>, _: &CallLimits| {
            Ok(serde_json::to_string(args).unwrap_or_default())
        }),
        "mock_empty" => Arc::new(|_: &str, _: &Map<String, Value>, _: &CallLimits| Ok(String::new())),
        "mock_fail" => Arc::new(|tool: &str, _: &Map<String, Value>, _: &CallLimits| {
            Err(BackendFailure::Tool(format!("{tool}: upstream rejected the request")))
        }),
        "mock_lookup" => Arc::new(move |tool: &str, args: &Map<String, Value>, _: &CallLimits| {
            Ok(lookup(seed, tool, args))
        }),
        "mock_transform" => Arc::new(move |tool: &str, args: &Map<String, Value>, _: &CallLimits| {
            Ok(transform(seed, tool, args))
        }),
        "mock_sleep" => Arc::new(|_: &str, args: &Map<String, Value>, limits: &CallLimits| {
            let ms = args.get("ms").and_then(Value::as_u64).unwrap_or(0);
            let wanted = Duration::from_millis(ms);
            if wanted > limits.timeout {
                std::thread::sleep(limits.timeout);
                return Err(BackendFailure::Timeout(format!(
                    "no response within {} ms",
                    limits.timeout.as_millis()
                )));
            }
            std::thread::sleep(wanted);
            Ok(format!("slept {ms} ms"))
        }),
        "mock_inflight_counter" => Arc::new(InflightCounter::default()),
        "mock_session_token" => Arc::new(SessionToken::new(seed)),
        _ => return None,
    };
    Some(backend)
}

fn add(args: &Map<String, Value>) -> Result<String, BackendFailure> {
    let a = args.get("a").ok_or_else(|| BackendFailure::Tool("missing `a`".into()))?;
    let b = args.get("b").ok_or_else(|| BackendFailure::Tool("missing `b`".into()))?;
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        return x
            .checked_add(y)
            .map(|s| s.to_string())
            .ok_or_else(|| BackendFailure::Tool("integer overflow".into()));
    }
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => Ok((x + y).to_string()),
        _ => Err(BackendFailure::Tool("operands must be numbers".into())),
    }
}

fn digest(seed: u64, tool: &str, args: &Map<String, Value>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tool.as_bytes());
    h.update([0]);
    h.update(serde_json::to_string(args).unwrap_or_default().as_bytes());
    h.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn first_string(args: &Map<String, Value>) -> String {
    args.values()
        .find_map(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Deterministic retrieval stand-in: a record whose identifiers are a hash
/// of (seed, tool, arguments).
fn lookup(seed: u64, tool: &str, args: &Map<String, Value>) -> String {
    let d = digest(seed, tool, args);
    let record = json!({
        "source": tool,
        "query": first_string(args),
        "id": format!("ID{}", hex(&d[0..4]).to_uppercase()),
        "related": [format!("ref{}", hex(&d[4..7])), format!("ref{}", hex(&d[7..10]))],
        "score": d[10] % 100,
    });
    record.to_string()
}

/// Deterministic processing stand-in over a `text` argument.
fn transform(seed: u64, tool: &str, args: &Map<String, Value>) -> String {
    let text = first_string(args);
    let d = digest(seed, tool, args);
    let upper: String = text.chars().take(64).collect::<String>().to_uppercase();
    json!({
        "tool": tool,
        "length": text.chars().count(),
        "digest": format!("dg{}", hex(&d[0..4])),
        "upper": upper,
    })
    .to_string()
}

/// Reports how many calls were in flight when it was entered. Sequential
/// calls always see 1; overlapping calls see different counts.
#[derive(Default)]
struct InflightCounter {
    active: AtomicUsize,
}

impl ToolBackend for InflightCounter {
    fn invoke(&self, _: &str, args: &Map<String, Value>, _: &CallLimits) -> Result<String, BackendFailure> {
        let seen = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        std::thread::sleep(Duration::from_millis(40));
        self.active.fetch_sub(1, Ordering::SeqCst);
        Ok(format!("{} (worker {seen})", first_string(args)))
    }
}

/// Appends a random token drawn whenever a call arrives while the tool is
/// idle; overlapping calls share the token of the burst they joined.
struct SessionToken {
    state: Mutex<SessionState>,
}

struct SessionState {
    rng: ChaCha8Rng,
    active: usize,
    token: u64,
}

impl SessionToken {
    fn new(seed: u64) -> Self {
        SessionToken {
            state: Mutex::new(SessionState {
                rng: ChaCha8Rng::seed_from_u64(seed),
                active: 0,
                token: 0,
            }),
        }
    }
}

impl ToolBackend for SessionToken {
    fn invoke(&self, _: &str, args: &Map<String, Value>, _: &CallLimits) -> Result<String, BackendFailure> {
        let token = {
            let mut s = self.state.lock().expect("session state poisoned");
            if s.active == 0 {
                s.token = s.rng.gen();
            }
            s.active += 1;
            s.token
        };
        std::thread::sleep(Duration::from_millis(40));
        self.state.lock().expect("session state poisoned").active -= 1;
        Ok(format!("{}-{token:016x}", first_string(args)))
    }
}

/// Dispatches calls to a remote endpoint: `POST {"tool", "arguments"}` and
/// expects `{"status": "ok" | "error", "payload": ...}` back.
pub struct HttpBackend {
    url: String,
    method: String,
    auth_env: Option<String>,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl HttpBackend {
    pub fn new(url: &str, method: &str, auth_env: Option<String>) -> Self {
        HttpBackend {
            url: url.to_string(),
            method: method.to_ascii_uppercase(),
            auth_env,
            client: OnceLock::new(),
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, BackendFailure> {
        self.client
            .get_or_init(|| reqwest::blocking::Client::builder().build().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| BackendFailure::Transport(format!("client init failed: {e}")))
    }
}

impl ToolBackend for HttpBackend {
    fn invoke(&self, tool: &str, args: &Map<String, Value>, limits: &CallLimits) -> Result<String, BackendFailure> {
        let method = reqwest::Method::from_bytes(self.method.as_bytes())
            .map_err(|_| BackendFailure::Transport(format!("bad method {}", self.method)))?;
        let mut req = self
            .client()?
            .request(method, &self.url)
            .timeout(limits.timeout)
            .json(&json!({ "tool": tool, "arguments": args }));
        if let Some(var) = &self.auth_env {
            if let Ok(token) = std::env::var(var) {
                req = req.bearer_auth(token);
            }
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendFailure::Transport(format!("HTTP {status}")));
        }
        let body: Value = resp.json().map_err(classify)?;
        let payload = match body.get("payload") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => return Err(BackendFailure::Transport("response lacks `payload`".into())),
        };
        match body.get("status").and_then(Value::as_str) {
            Some(s) if s.eq_ignore_ascii_case("ok") => Ok(payload),
            Some(_) => Err(BackendFailure::Tool(payload)),
            None => Err(BackendFailure::Transport("response lacks `status`".into())),
        }
    }
}

fn classify(err: reqwest::Error) -> BackendFailure {
    if err.is_timeout() {
        BackendFailure::Timeout(err.to_string())
    } else {
        BackendFailure::Transport(err.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn every_listed_builtin_resolves() {
        for name in BUILTIN_NAMES {
            assert!(builtin_backend(name, 0).is_some(), "{name}");
        }
        assert!(builtin_backend("nope", 0).is_none());
    }

    #[test]
    fn add_handles_ints_and_floats() {
        let l = CallLimits::default();
        let b = builtin_backend("mock_add", 0).unwrap();
        assert_eq!(b.invoke("t", &args(json!({"a": 2, "b": 3})), &l).unwrap(), "5");
        assert_eq!(b.invoke("t", &args(json!({"a": 0.5, "b": 1})), &l).unwrap(), "1.5");
    }

    #[test]
    fn lookup_depends_on_seed_tool_and_args() {
        let l = CallLimits::default();
        let a = builtin_backend("mock_lookup", 1).unwrap();
        let b = builtin_backend("mock_lookup", 2).unwrap();
        let q = args(json!({"query": "erlotinib"}));
        assert_eq!(a.invoke("t", &q, &l), a.invoke("t", &q, &l));
        assert_ne!(a.invoke("t", &q, &l), b.invoke("t", &q, &l));
        assert_ne!(a.invoke("t", &q, &l), a.invoke("u", &q, &l));
    }

    #[test]
    fn session_token_changes_between_sequential_calls() {
        let l = CallLimits::default();
        let b = builtin_backend("mock_session_token", 7).unwrap();
        let q = args(json!({"query": "x"}));
        assert_ne!(b.invoke("t", &q, &l).unwrap(), b.invoke("t", &q, &l).unwrap());
    }

    #[test]
    fn inflight_counter_is_stable_sequentially() {
        let l = CallLimits::default();
        let b = builtin_backend("mock_inflight_counter", 0).unwrap();
        let q = Map::new();
        assert_eq!(b.invoke("t", &q, &l).unwrap(), b.invoke("t", &q, &l).unwrap());
    }
}
