use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_request, Backend, Completion, GenerationParams, LlmError, TokenCounts};
use crate::prompt::PromptBundle;
use crate::timing::{self, Nanos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. An unset
    /// variable is an error only when this is non-empty.
    pub api_key_env: String,
    pub max_retries: u32,
    #[serde(with = "timing::millis")]
    pub initial_backoff: Duration,
    pub backoff_factor: f64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_owned(),
            model: "codellama-7b-hls".to_owned(),
            api_key_env: "HLSGEN_API_KEY".to_owned(),
            max_retries: 3,
            initial_backoff: Duration::from_secs(1),
            backoff_factor: 2.0,
            max_in_flight: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteResponse {
    pub completions: Vec<Completion>,
    /// Retries spent over all HTTP requests of this call.
    pub retries: u32,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<Usage>,
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

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Client for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug)]
pub struct ChatClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    limiter: Limiter,
}

enum Attempt {
    Done(ChatResponse),
    Retry(LlmError),
    Fatal(LlmError),
}

impl ChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Transport { message: e.to_string(), retries: 0 })?;
        let limiter = Limiter::new(config.max_in_flight);
        Ok(Self { config, http, limiter })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn api_key(&self) -> Result<Option<String>, LlmError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env) {
            Ok(k) => Ok(Some(k)),
            Err(_) => Err(LlmError::MissingApiKey(self.config.api_key_env.clone())),
        }
    }

    fn attempt(&self, body: &serde_json::Value, key: Option<&str>, timeout: Duration) -> Attempt {
        let mut req = self.http.post(&self.config.endpoint).timeout(timeout).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { retries: 0 }),
            Err(e) => return Attempt::Retry(LlmError::Transport { message: e.to_string(), retries: 0 }),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::Transport { message: e.to_string(), retries: 0 }),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(LlmError::Status { status: status.as_u16(), body: text, retries: 0 });
        }
        if !status.is_success() {
            return Attempt::Fatal(LlmError::Status { status: status.as_u16(), body: text, retries: 0 });
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(r) => Attempt::Done(r),
            Err(e) => Attempt::Fatal(LlmError::Decode(e.to_string())),
        }
    }

    /// One logical request with retries; `retries` counts re-sends.
    fn request(&self, body: &serde_json::Value, key: Option<&str>, timeout: Duration, retries: &mut u32) -> Result<ChatResponse, LlmError> {
        let mut backoff = self.config.initial_backoff;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.attempt(body, key, timeout)
            };
            let err = match outcome {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(with_retries(e, *retries)),
                Attempt::Retry(e) => e,
            };
            if *retries >= self.config.max_retries {
                return Err(with_retries(err, *retries));
            }
            tracing::debug!(error = %err, retry = *retries + 1, "retrying chat request");
            thread::sleep(backoff);
            backoff = backoff.mul_f64(self.config.backoff_factor.max(1.0));
            *retries += 1;
        }
    }

    /// Requests until `params.n_samples` completions have been collected.
    pub fn complete(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<RemoteResponse, LlmError> {
        check_request(bundle, params)?;
        let key = self.api_key()?;
        let messages: Vec<_> = bundle
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.text}))
            .collect();
        let mut retries = 0;
        let mut completions = Vec::with_capacity(params.n_samples);
        while completions.len() < params.n_samples {
            let want = params.n_samples - completions.len();
            let mut body = json!({
                "model": self.config.model,
                "messages": messages,
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
                "n": want,
            });
            if !params.stop_sequences.is_empty() {
                body["stop"] = json!(params.stop_sequences);
            }
            let start = Instant::now();
            let resp = self.request(&body, key.as_deref(), params.request_timeout, &mut retries)?;
            let latency = Nanos::from(start.elapsed());
            if resp.choices.is_empty() {
                return Err(LlmError::Decode("response has no choices".into()));
            }
            let single = resp.choices.len() == 1;
            let counts = resp.usage.map(|u| TokenCounts { prompt: u.prompt_tokens, completion: u.completion_tokens });
            for choice in resp.choices.into_iter().take(want) {
                completions.push(Completion {
                    text: choice.message.content.unwrap_or_default(),
                    backend_id: format!("remote:{}", self.config.model),
                    latency,
                    // usage is per request; only attributable to a lone choice
                    token_counts: if single { counts } else { None },
                });
            }
        }
        Ok(RemoteResponse { completions, retries })
    }
}

fn with_retries(err: LlmError, n: u32) -> LlmError {
    match err {
        LlmError::Transport { message, .. } => LlmError::Transport { message, retries: n },
        LlmError::Status { status, body, .. } => LlmError::Status { status, body, retries: n },
        LlmError::Timeout { .. } => LlmError::Timeout { retries: n },
        other => other,
    }
}

impl Backend for ChatClient {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError> {
        self.complete(bundle, params).map(|r| r.completions)
    }
}
