//! Chat-completions client for label decomposition.

use std::env;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use pda_core::semantics::{LlmClient, ProviderIdentity};
use pda_core::{PdaError, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Name of the environment variable holding the provider API key.
pub const API_KEY_VAR: &str = "PDA_LLM_API_KEY";

const ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub provider: String,
    pub model: String,
    /// Full URL of an OpenAI-compatible chat-completions endpoint.
    pub endpoint: String,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            provider: "openai".into(),
            model: "gpt-4o".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            timeout_secs: 60,
        }
    }
}

impl ProviderConfig {
    pub fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::new(&self.provider, &self.model)
    }
}

pub struct HttpClient {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    /// Reads the API key from the environment; nothing else is taken from it.
    pub fn from_env(config: ProviderConfig) -> Result<Self> {
        let api_key = env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| PdaError::Config(format!("{API_KEY_VAR} is not set; it is needed on cache misses")))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<String, (bool, String)> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err((false, format!("HTTP {status}: {text}")));
        }
        completion_text(&text).map_err(|e| (false, e))
    }
}

/// Pulls the first choice's message out of a chat-completions response.
pub fn completion_text(raw: &str) -> std::result::Result<String, String> {
    #[derive(Deserialize)]
    struct Message {
        content: Option<String>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }
    #[derive(Deserialize)]
    struct Completion {
        choices: Vec<Choice>,
    }
    let parsed: Completion = serde_json::from_str(raw).map_err(|e| format!("unexpected response body: {e}"))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| "response has no message content".to_string())
}

impl LlmClient for HttpClient {
    fn identity(&self) -> ProviderIdentity {
        self.config.identity()
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let mut last = String::new();
        for attempt in 1..=ATTEMPTS {
            debug!(
                "requesting completion from {} (attempt {attempt})",
                self.config.endpoint
            );
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    if !retry || attempt == ATTEMPTS {
                        return Err(PdaError::Provider(msg));
                    }
                    warn!("provider request failed, retrying: {msg}");
                    last = msg;
                    thread::sleep(Duration::from_millis(500 * 2u64.pow(attempt - 1)));
                }
            }
        }
        Err(PdaError::Provider(last))
    }
}
