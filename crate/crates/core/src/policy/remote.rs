use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{parse_response, request_body};
use super::{AssistantTurn, ChatMessage, Decoding, PolicyError, ToolDecl};

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key. Its value is never logged.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout_secs() -> u64 {
    300
}

impl RemoteConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        RemoteConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

pub(super) struct RemoteClient {
    config: RemoteConfig,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl RemoteClient {
    pub(super) fn new(config: RemoteConfig) -> Self {
        RemoteClient {
            config,
            client: OnceLock::new(),
        }
    }

    pub(super) fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDecl],
        decoding: &Decoding,
        seed: u64,
    ) -> Result<AssistantTurn, PolicyError> {
        let client = self
            .client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(self.config.timeout_secs))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| PolicyError::Transport(e.clone()))?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = request_body(&self.config.model, messages, tools, decoding, seed);
        let mut req = client.post(&url).json(&body);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| PolicyError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| PolicyError::Transport(e.to_string()))?;
        let json: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(_) if !status.is_success() => {
                return Err(PolicyError::Transport(format!("HTTP {status}")));
            }
            Err(e) => {
                return Err(PolicyError::MalformedTurn {
                    raw: text,
                    reason: format!("response is not JSON: {e}"),
                })
            }
        };
        if !status.is_success() && json.get("error").is_none() {
            return Err(PolicyError::Transport(format!("HTTP {status}")));
        }
        parse_response(&json)
    }
}
