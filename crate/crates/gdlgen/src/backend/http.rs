//! Chat-completions HTTP backend with bounded exponential-backoff retry.
//!
//! POSTs `{base_url}/v1/chat/completions` with a single user message
//! holding the built prompt, and reads `choices[0].message.content` from
//! the response. The bearer token comes from the environment variable named
//! in the config, so keys never live in config files.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{build_prompt, Backend, BackendError, BackendResponse, GenerationRequest};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RetryPolicy {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_attempts() -> u32 {
    3
}

fn default_base_delay() -> u64 {
    1000
}

fn default_factor() -> f64 {
    2.0
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            factor: default_factor(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    120
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<HttpBackend, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::Config {
                message: format!("environment variable {} is not set", var),
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config {
                message: format!("cannot build http client: {}", e),
            })?;
        Ok(HttpBackend {
            client,
            config,
            api_key,
        })
    }

    fn attempt(&self, prompt: &str, req: &GenerationRequest) -> Result<String, AttemptError> {
        let url = format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: req.params.temperature,
            max_tokens: req.params.max_tokens,
        };
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| AttemptError {
            retryable: true,
            error: BackendError::Transport {
                message: e.to_string(),
            },
        })?;
        let status = response.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let message = response.text().unwrap_or_default();
            return Err(AttemptError {
                retryable,
                error: BackendError::Http {
                    status: status.as_u16(),
                    message: truncate(&message, 300),
                },
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| AttemptError {
            retryable: false,
            error: BackendError::Http {
                status: status.as_u16(),
                message: format!("malformed response payload: {}", e),
            },
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(AttemptError {
                retryable: false,
                error: BackendError::Http {
                    status: status.as_u16(),
                    message: "response has no choices".to_string(),
                },
            })
    }
}

struct AttemptError {
    retryable: bool,
    error: BackendError,
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => text[..idx].to_string(),
        None => text.to_string(),
    }
}

impl Backend for HttpBackend {
    fn generate(&mut self, req: &GenerationRequest) -> Result<BackendResponse, BackendError> {
        let prompt = build_prompt(req);
        let started = Instant::now();
        let retry = &self.config.retry;
        let mut last = String::new();
        for attempt in 0..retry.max_attempts {
            match self.attempt(&prompt, req) {
                Ok(text) => {
                    return Ok(BackendResponse {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(AttemptError { retryable, error }) => {
                    if !retryable {
                        return Err(error);
                    }
                    last = error.to_string();
                    if attempt + 1 < retry.max_attempts {
                        let delay = retry.base_delay_ms as f64 * retry.factor.powi(attempt as i32);
                        std::thread::sleep(Duration::from_millis(delay as u64));
                    }
                }
            }
        }
        Err(BackendError::Exhausted {
            attempts: retry.max_attempts,
            last,
        })
    }

    fn label(&self) -> &'static str {
        "http"
    }
}
