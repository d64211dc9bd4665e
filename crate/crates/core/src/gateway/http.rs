use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{LmBackend, LmError, LmRequest, LmResponse};

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LmError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            LmError::Config(format!("environment variable {} is not set", config.api_key_env))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LmError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl LmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.rendered,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            n: 1,
        };
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LmError::Provider {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| LmError::Provider {
            status: status.as_u16(),
            body: format!("undecodable response ({e}): {text}"),
        })?;
        let usage = parsed.usage.unwrap_or_default();
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(LmResponse {
            text: content,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            backend_id: self.id(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_is_a_config_error() {
        let cfg = HttpConfig {
            api_key_env: "TM_TEST_DEFINITELY_UNSET_KEY".into(),
            ..HttpConfig::default()
        };
        assert!(matches!(HttpBackend::new(cfg), Err(LmError::Config(_))));
    }
}
