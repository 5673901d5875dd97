use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_request, Backend, Completion, GenerationParams, LlmError, TokenCounts};
use crate::prompt::PromptBundle;
use crate::timing::Nanos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_samples: usize,
    pub stop_sequences: Vec<String>,
}

impl From<&GenerationParams> for CassetteParams {
    fn from(p: &GenerationParams) -> Self {
        Self {
            temperature: p.temperature,
            max_tokens: p.max_tokens,
            n_samples: p.n_samples,
            stop_sequences: p.stop_sequences.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedCompletion {
    pub text: String,
    pub backend_id: String,
    pub latency: Nanos,
    #[serde(default)]
    pub token_counts: Option<TokenCounts>,
}

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub params: CassetteParams,
    pub completions: Vec<RecordedCompletion>,
}

/// SHA-256 over the rendered prompt and every sampling parameter.
pub fn cassette_key(bundle: &PromptBundle, params: &GenerationParams) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        prompt: &'a str,
        #[serde(flatten)]
        params: CassetteParams,
    }
    let rendered = bundle.render();
    let material = KeyMaterial { prompt: &rendered, params: CassetteParams::from(params) };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone)]
pub enum CassetteMode {
    /// Always ask `inner`; store entries whose key is new.
    Record(Arc<dyn Backend>),
    /// Serve recorded entries only; a miss is an error.
    Strict,
    /// Serve recorded entries; on a miss ask `inner` and store.
    Permissive(Arc<dyn Backend>),
}

impl std::fmt::Debug for CassetteMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CassetteMode::Record(b) => write!(f, "Record({})", b.id()),
            CassetteMode::Strict => f.write_str("Strict"),
            CassetteMode::Permissive(b) => write!(f, "Permissive({})", b.id()),
        }
    }
}

struct State {
    entries: HashMap<String, CassetteEntry>,
    sink: Option<File>,
}

/// Record/replay backend over a JSONL cassette.
pub struct CassetteBackend {
    path: PathBuf,
    mode: CassetteMode,
    state: Mutex<State>,
}

impl std::fmt::Debug for CassetteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CassetteBackend").field("path", &self.path).field("mode", &self.mode).finish_non_exhaustive()
    }
}

fn load(path: &Path) -> Result<HashMap<String, CassetteEntry>, LlmError> {
    let mut entries = HashMap::new();
    if !path.exists() {
        return Ok(entries);
    }
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(&line)
            .map_err(|e| LlmError::Cassette(format!("{}:{}: {e}", path.display(), i + 1)))?;
        entries.entry(entry.key.clone()).or_insert(entry);
    }
    Ok(entries)
}

impl CassetteBackend {
    /// Opens (or, when recording, creates) the cassette at `path`. A strict
    /// cassette must already exist.
    pub fn open(path: impl Into<PathBuf>, mode: CassetteMode) -> Result<Self, LlmError> {
        let path = path.into();
        if matches!(mode, CassetteMode::Strict) && !path.exists() {
            return Err(LlmError::Cassette(format!("{} does not exist", path.display())));
        }
        let entries = load(&path)?;
        let sink = match mode {
            CassetteMode::Strict => None,
            _ => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                Some(OpenOptions::new().create(true).append(true).open(&path)?)
            }
        };
        Ok(Self { path, mode, state: Mutex::new(State { entries, sink }) })
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup(&self, key: &str) -> Option<Vec<Completion>> {
        let state = self.state.lock().unwrap();
        state.entries.get(key).map(|e| {
            e.completions
                .iter()
                .map(|c| Completion {
                    text: c.text.clone(),
                    backend_id: c.backend_id.clone(),
                    latency: c.latency,
                    token_counts: c.token_counts,
                })
                .collect()
        })
    }

    fn store(&self, key: String, params: &GenerationParams, completions: &[Completion]) -> Result<(), LlmError> {
        let mut state = self.state.lock().unwrap();
        if state.entries.contains_key(&key) {
            return Ok(());
        }
        let entry = CassetteEntry {
            key: key.clone(),
            params: CassetteParams::from(params),
            completions: completions
                .iter()
                .map(|c| RecordedCompletion {
                    text: c.text.clone(),
                    backend_id: c.backend_id.clone(),
                    latency: c.latency,
                    token_counts: c.token_counts,
                })
                .collect(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| LlmError::Cassette(e.to_string()))?;
        line.push('\n');
        if let Some(sink) = state.sink.as_mut() {
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        state.entries.insert(key, entry);
        Ok(())
    }

    fn delegate(&self, inner: &dyn Backend, key: String, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError> {
        let out = inner.generate(bundle, params)?;
        self.store(key, params, &out)?;
        Ok(out)
    }
}

impl Backend for CassetteBackend {
    fn id(&self) -> String {
        match &self.mode {
            CassetteMode::Record(b) => format!("record:{}", b.id()),
            CassetteMode::Strict => "replay".to_owned(),
            CassetteMode::Permissive(b) => format!("replay-or:{}", b.id()),
        }
    }

    fn generate(&self, bundle: &PromptBundle, params: &GenerationParams) -> Result<Vec<Completion>, LlmError> {
        check_request(bundle, params)?;
        let key = cassette_key(bundle, params);
        match &self.mode {
            CassetteMode::Record(inner) => self.delegate(inner.as_ref(), key, bundle, params),
            CassetteMode::Strict => self.lookup(&key).ok_or(LlmError::CassetteMiss(key)),
            CassetteMode::Permissive(inner) => match self.lookup(&key) {
                Some(hit) => Ok(hit),
                None => self.delegate(inner.as_ref(), key, bundle, params),
            },
        }
    }
}
