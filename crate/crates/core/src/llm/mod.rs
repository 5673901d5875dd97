//! Text-generation backends and code extraction from completions.

mod cassette;
mod remote;

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{cassette_key, CassetteBackend, CassetteEntry, CassetteMode, RecordedCompletion};
pub use remote::{ChatClient, RemoteConfig, RemoteResponse};

use crate::prompt::PromptBundle;
use crate::timing::{self, Nanos};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Candidates per request; the `n` of pass@k.
    pub n_samples: usize,
    pub stop_sequences: Vec<String>,
    #[serde(with = "timing::millis")]
    pub request_timeout: Duration,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_tokens: 2048,
            n_samples: 3,
            stop_sequences: Vec::new(),
            request_timeout: Duration::from_secs(120),
        }
    }
}

impl GenerationParams {
    pub fn check(&self) -> Result<(), LlmError> {
        if self.n_samples == 0 {
            return Err(LlmError::InvalidParams("n_samples must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidParams("max_tokens must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidParams("temperature must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend_id: String,
    pub latency: Nanos,
    pub token_counts: Option<TokenCounts>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("prompt renders to empty text")]
    EmptyPrompt,
    #[error("transport error after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("server returned status {status} after {retries} retries: {body}")]
    Status { status: u16, body: String, retries: u32 },
    #[error("request timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("malformed response body: {0}")]
    Decode(String),
    #[error("API key variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("no recorded response for prompt digest {0}")]
    CassetteMiss(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("backend failure: {0}")]
    Scripted(String),
    #[error("backend returned {got} completions, expected {expected}")]
    WrongCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A source of completions. Implementations must be callable from several
/// threads at once.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Exactly `params.n_samples` completions, or an error.
    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError>;
}

pub(crate) fn check_request(bundle: &PromptBundle, params: &GenerationParams) -> Result<(), LlmError> {
    params.check()?;
    if bundle.render().trim().is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    Ok(())
}

/// Serves canned responses in order, one per requested sample. An `Err`
/// entry makes the whole request fail with that message.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    id: String,
    queue: Mutex<VecDeque<Result<String, String>>>,
}

impl ScriptedBackend {
    pub fn new(responses: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self { id: "scripted".to_owned(), queue: Mutex::new(responses.into_iter().collect()) }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError> {
        check_request(bundle, params)?;
        let start = Instant::now();
        let mut queue = self.queue.lock().unwrap();
        let mut out = Vec::with_capacity(params.n_samples);
        for _ in 0..params.n_samples {
            match queue.pop_front() {
                None => return Err(LlmError::ScriptExhausted),
                Some(Err(msg)) => return Err(LlmError::Scripted(msg)),
                Some(Ok(text)) => out.push(text),
            }
        }
        let latency = Nanos::from(start.elapsed());
        Ok(out
            .into_iter()
            .map(|text| Completion { text, backend_id: self.id.clone(), latency, token_counts: None })
            .collect())
    }
}

type ResponderFn = dyn Fn(&PromptBundle, &GenerationParams) -> Result<Vec<String>, LlmError> + Send + Sync;

/// Backend computed from the prompt by a closure; handy for responders
/// that react to feedback text.
pub struct FnBackend {
    id: String,
    f: Box<ResponderFn>,
}

impl FnBackend {
    pub fn new<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&PromptBundle, &GenerationParams) -> Result<Vec<String>, LlmError> + Send + Sync + 'static,
    {
        Self { id: id.into(), f: Box::new(f) }
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnBackend").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Backend for FnBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError> {
        check_request(bundle, params)?;
        let start = Instant::now();
        let texts = (self.f)(bundle, params)?;
        if texts.len() != params.n_samples {
            return Err(LlmError::WrongCount { expected: params.n_samples, got: texts.len() });
        }
        let latency = Nanos::from(start.elapsed());
        Ok(texts
            .into_iter()
            .map(|text| Completion { text, backend_id: self.id.clone(), latency, token_counts: None })
            .collect())
    }
}

/// Content of the longest fenced block (by line count, first wins ties).
/// An unterminated fence runs to the end of the text. Without fences, the
/// whole text. The result is trimmed either way.
pub fn extract_code(text: &str) -> String {
    let mut best: Option<(usize, String)> = None;
    let mut open: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match open.take() {
            None if is_fence => open = Some(Vec::new()),
            None => {}
            Some(body) if is_fence => consider(&mut best, body),
            Some(mut body) => {
                body.push(line);
                open = Some(body);
            }
        }
    }
    if let Some(body) = open {
        consider(&mut best, body);
    }
    match best {
        Some((_, code)) => code.trim().to_owned(),
        None => text.trim().to_owned(),
    }
}

fn consider(best: &mut Option<(usize, String)>, body: Vec<&str>) {
    if best.as_ref().is_none_or(|(n, _)| body.len() > *n) {
        *best = Some((body.len(), body.join("\n")));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{Message, Role};

    fn bundle() -> PromptBundle {
        PromptBundle {
            messages: vec![Message { role: Role::User, text: "make f".into() }],
            cot_enabled: false,
            feedback_history: vec![],
        }
    }

    fn one() -> GenerationParams {
        GenerationParams { n_samples: 1, ..GenerationParams::default() }
    }

    #[test]
    fn scripted_echoes_in_order() {
        let b = ScriptedBackend::from_texts(["int f(){return 0;}"]);
        let out = b.generate(&bundle(), &one()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "int f(){return 0;}");
        assert!(matches!(b.generate(&bundle(), &one()), Err(LlmError::ScriptExhausted)));
    }

    #[test]
    fn scripted_error_entry_fails_request() {
        let b = ScriptedBackend::new([Ok("a".into()), Err("boom".into())]);
        let p = GenerationParams { n_samples: 2, ..GenerationParams::default() };
        assert!(matches!(b.generate(&bundle(), &p), Err(LlmError::Scripted(m)) if m == "boom"));
    }

    #[test]
    fn empty_prompt_rejected() {
        let b = ScriptedBackend::from_texts(["x"]);
        let empty = PromptBundle { messages: vec![], cot_enabled: false, feedback_history: vec![] };
        assert!(matches!(b.generate(&empty, &one()), Err(LlmError::EmptyPrompt)));
        let bad = GenerationParams { n_samples: 0, ..GenerationParams::default() };
        assert!(matches!(b.generate(&bundle(), &bad), Err(LlmError::InvalidParams(_))));
    }

    #[test]
    fn extract_single_fence() {
        assert_eq!(extract_code("Here:\n```c\nint x;\n```"), "int x;");
    }

    #[test]
    fn extract_without_fence() {
        assert_eq!(extract_code("  int y = 2;\n"), "int y = 2;");
    }

    #[test]
    fn extract_longest_block() {
        let short = "a\nb\nc";
        let long = "l1\nl2\nl3\nl4\nl5\nl6\nl7";
        let text = format!("first\n```c\n{short}\n```\nthen\n```cpp\n{long}\n```\ndone");
        assert_eq!(extract_code(&text), long);
        let text = format!("```\n{long}\n```\n```\n{short}\n```");
        assert_eq!(extract_code(&text), long);
    }

    #[test]
    fn extract_unterminated_fence() {
        assert_eq!(extract_code("```c\nint z;\n"), "int z;");
    }

    proptest::proptest! {
        #[test]
        fn extract_is_idempotent(text in "[a-z ;{}\n`]{0,80}") {
            let once = extract_code(&text);
            if !once.contains("```") {
                proptest::prop_assert_eq!(extract_code(&once), once.clone());
            }
        }
    }
}
