use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{DecodingParams, Predictor, PredictorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_token_env() -> String {
    "TREEKD_API_TOKEN".into()
}

fn default_concurrency() -> usize {
    8
}

fn default_timeout_secs() -> u64 {
    60
}

impl HttpConfig {
    pub fn new(endpoint: &str, model: &str) -> HttpConfig {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: default_token_env(),
            concurrency: default_concurrency(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

/// Chat-completions client: one user message per prompt, answer read from
/// `choices[0].message.content`.
pub struct HttpPredictor {
    config: HttpConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpPredictor {
    pub fn new(config: HttpConfig) -> Result<HttpPredictor, PredictorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| PredictorError::BackendUnavailable(e.to_string()))?;
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        Ok(HttpPredictor { config, token, client })
    }

    pub fn request_body(&self, prompt: &str, params: &DecodingParams) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        });
        if let Some(seed) = params.sample_seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl Predictor for HttpPredictor {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, PredictorError> {
        let mut request = self.client.post(&self.config.endpoint).json(&self.request_body(prompt, params));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                PredictorError::Timeout(e.to_string())
            } else {
                PredictorError::BackendUnavailable(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(PredictorError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body: Value = response
            .json()
            .map_err(|e| PredictorError::BackendUnavailable(format!("unreadable response: {e}")))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| PredictorError::BackendUnavailable("response has no choices[0].message.content".into()))
    }

    fn max_concurrency(&self) -> usize {
        self.config.concurrency.max(1)
    }
}
