//! Chat-completion client. In mock mode nothing leaves the process and the
//! orchestrator substitutes deterministic rules for model calls.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_id: String,
    pub mode: LlmMode,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_id: "mistral-7b-instruct".into(),
            mode: LlmMode::Mock,
            temperature: 0.0,
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl LlmConfig {
    pub fn remote(endpoint: &str, model_id: &str) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            mode: LlmMode::Remote,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidConfig("temperature must be non-negative".into()));
        }
        if self.mode == LlmMode::Remote && self.endpoint.is_empty() {
            return Err(Error::InvalidConfig("remote model needs an endpoint".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct LlmClient {
    config: LlmConfig,
    agent: Option<ureq::Agent>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.config).finish()
    }
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self> {
        config.validate()?;
        let agent = (config.mode == LlmMode::Remote).then(|| http::agent(Duration::from_secs(config.timeout_secs)));
        Ok(Self { config, agent })
    }

    pub fn mock() -> Self {
        Self {
            config: LlmConfig::default(),
            agent: None,
        }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn is_mock(&self) -> bool {
        self.config.mode == LlmMode::Mock
    }

    /// Send a chat completion and return the first choice's text.
    /// Whitespace-only completions are [`Error::EmptyCompletion`].
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        let Some(agent) = &self.agent else {
            return Err(Error::InvalidConfig("chat called on a mock client".into()));
        };
        let req = ChatRequest {
            model: &self.config.model_id,
            messages,
            temperature: self.config.temperature,
        };
        let resp: ChatResponse = http::post_json(agent, &self.config.endpoint, &req, "llm")?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Error::EmptyCompletion);
        }
        Ok(text)
    }
}
