//! Run configuration file. Every key is optional; command-line flags
//! override what the file sets.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hlsgen::func_check::FuncCheckConfig;
use hlsgen::llm::{GenerationParams, RemoteConfig};
use hlsgen::prompt::FeedbackKind;
use hlsgen::syntax_check::SyntaxCheckConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub tests: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    /// Directory with replacement prompt templates.
    pub templates: Option<PathBuf>,
    pub backend: RemoteConfig,
    pub generation: GenerationParams,
    #[serde(rename = "loop")]
    pub loop_: LoopSection,
    pub syntax: SyntaxCheckConfig,
    pub functional: FuncCheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub max_feedback_iterations: u32,
    pub cot: bool,
    pub feedback: BTreeSet<FeedbackKind>,
}

impl Default for LoopSection {
    fn default() -> Self {
        Self {
            max_feedback_iterations: 2,
            cot: true,
            feedback: [FeedbackKind::Syntax, FeedbackKind::Functional].into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.tests, &mut cfg.out, &mut cfg.cassette, &mut cfg.templates]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
