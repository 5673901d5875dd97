//! Natural-language design descriptions generated from reference sources.

use std::path::Path;

use thiserror::Error;

use crate::dataset::{
    tag_complexity, Category, ComplexityThresholds, DesignPoint, Pragma, PromptVariant, DEFAULT_INSTRUCTION,
};
use crate::llm::{extract_code, Backend, GenerationParams, LlmError};
use crate::prompt::{fill_template, Message, PromptBundle, Role};

pub const DESCRIBE_TEMPLATE: &str = include_str!("../templates/describe.txt");

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("base prompt is empty")]
    EmptyBasePrompt,
    #[error("empty description")]
    EmptyDescription,
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionJob {
    pub source: String,
    /// Template with a `{code}` placeholder; without one the source is
    /// appended after a blank line.
    pub base_prompt: String,
    pub output_variant: PromptVariant,
}

impl DescriptionJob {
    pub fn new(source: impl Into<String>) -> Self {
        Self { source: source.into(), base_prompt: DESCRIBE_TEMPLATE.to_owned(), output_variant: PromptVariant::MachineGen }
    }

    pub fn prompt(&self) -> PromptBundle {
        let text = if self.base_prompt.contains("{code}") {
            fill_template(&self.base_prompt, &[("code", self.source.trim_end())])
        } else {
            format!("{}\n\n{}", self.base_prompt.trim_end(), self.source.trim_end())
        };
        PromptBundle {
            messages: vec![Message { role: Role::User, text: text.trim_end().to_owned() }],
            cot_enabled: false,
            feedback_history: Vec::new(),
        }
    }
}

/// First completion with any code fence stripped.
pub fn describe(job: &DescriptionJob, backend: &dyn Backend, params: &GenerationParams) -> Result<String, DescribeError> {
    if job.base_prompt.trim().is_empty() {
        return Err(DescribeError::EmptyBasePrompt);
    }
    let params = GenerationParams { n_samples: 1, ..params.clone() };
    let completions = backend.generate(&job.prompt(), &params)?;
    let text = completions.first().map(|c| extract_code(&c.text)).unwrap_or_default();
    if text.is_empty() {
        return Err(DescribeError::EmptyDescription);
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointDefaults {
    pub id: String,
    pub source_file: String,
    pub category: Category,
    pub thresholds: ComplexityThresholds,
}

impl PointDefaults {
    /// Id from the file stem, `OtherKernel` category, default thresholds.
    pub fn for_file(path: &Path) -> Self {
        let source_file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self { id, source_file, category: Category::OtherKernel, thresholds: ComplexityThresholds::default() }
    }
}

pub fn assemble_point(source: &str, description: &str, defaults: &PointDefaults) -> DesignPoint {
    DesignPoint {
        id: defaults.id.clone(),
        instruction: DEFAULT_INSTRUCTION.to_owned(),
        description: description.trim().to_owned(),
        reference_source: source.to_owned(),
        source_file: defaults.source_file.clone(),
        category: defaults.category,
        pragmas: Pragma::detect(source),
        complexity: tag_complexity(source, &defaults.thresholds),
        prompt_variant: PromptVariant::MachineGen,
    }
}
