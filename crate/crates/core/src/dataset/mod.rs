//! Benchmark design points stored as Alpaca-style JSONL.
//!
//! Each line is one object. The Alpaca core keys map as
//! `instruction -> instruction`, `input -> description`,
//! `output -> reference_source`; everything else (`id`, `source_file`,
//! `category`, `pragmas`, `complexity`, `prompt_variant`, `schema_version`)
//! sits at the top level next to them.

mod complexity;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use complexity::{source_metrics, tag_complexity, ComplexityThresholds, SourceMetrics};

use crate::rng::XorShift64Star;

pub const SCHEMA_VERSION: &str = "1";
pub const DEFAULT_INSTRUCTION: &str = "Generate HLS code with the following instructions:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    MatrixLinearAlgebra,
    ScientificSimulation,
    StatisticalComputation,
    IterativeMethod,
    OtherKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pragma {
    Pipeline,
    Parallel,
    Tile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Complexity {
    Easy,
    Medium,
    Difficult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum PromptVariant {
    #[default]
    MachineGen,
    HumanRefine,
}

macro_rules! display_via_debug {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(self, f)
            }
        }
    )*};
}
display_via_debug!(Category, Complexity, PromptVariant);

impl fmt::Display for Pragma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pragma::Pipeline => "PIPELINE",
            Pragma::Parallel => "PARALLEL",
            Pragma::Tile => "TILE",
        })
    }
}

impl Pragma {
    /// Optimization directives present on `#pragma` lines of `source`.
    /// HLSyn-style `ACCEL PIPELINE/PARALLEL/TILE` and Vivado-style
    /// `HLS pipeline/unroll` are both recognized.
    pub fn detect(source: &str) -> BTreeSet<Pragma> {
        let mut found = BTreeSet::new();
        for line in source.lines() {
            let line = line.trim_start();
            let Some(rest) = line.strip_prefix("#pragma") else { continue };
            let rest = rest.to_ascii_uppercase();
            for word in rest.split(|c: char| !c.is_ascii_alphanumeric() && c != '_') {
                match word {
                    "PIPELINE" => {
                        found.insert(Pragma::Pipeline);
                    }
                    "PARALLEL" | "UNROLL" => {
                        found.insert(Pragma::Parallel);
                    }
                    "TILE" => {
                        found.insert(Pragma::Tile);
                    }
                    _ => {}
                }
            }
        }
        found
    }
}

/// One benchmark entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub id: String,
    pub instruction: String,
    pub description: String,
    pub reference_source: String,
    pub source_file: String,
    pub category: Category,
    pub pragmas: BTreeSet<Pragma>,
    pub complexity: Complexity,
    pub prompt_variant: PromptVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub points: Vec<DesignPoint>,
    pub split_seed: u64,
    pub schema_version: String,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl DatasetManifest {
    pub fn new(points: Vec<DesignPoint>) -> Self {
        Self {
            points,
            split_seed: 0,
            schema_version: SCHEMA_VERSION.to_owned(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&DesignPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is not valid UTF-8 (byte offset {offset})")]
    Decode { offset: usize },
    #[error("cannot split an empty manifest")]
    EmptyManifest,
    #[error("split ratio parts must both be at least 1 (got {train}:{test})")]
    BadRatio { train: usize, test: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    /// Offending field, when the error is about one.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// A default filled in during ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedDefault {
    pub line: usize,
    pub point_id: String,
    pub field: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct Parsed {
    pub manifest: DatasetManifest,
    pub errors: Vec<LineError>,
    pub defaults_applied: Vec<AppliedDefault>,
}

/// Wire layout of one JSONL line.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(skip_serializing_if = "Option::is_none")]
    instruction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<Category>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pragmas: Option<BTreeSet<Pragma>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complexity: Option<Complexity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prompt_variant: Option<PromptVariant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schema_version: Option<String>,
}

impl From<&DesignPoint> for Record {
    fn from(p: &DesignPoint) -> Self {
        Record {
            instruction: Some(p.instruction.clone()),
            input: Some(p.description.clone()),
            output: Some(p.reference_source.clone()),
            id: Some(p.id.clone()),
            source_file: Some(p.source_file.clone()),
            category: Some(p.category),
            pragmas: Some(p.pragmas.clone()),
            complexity: Some(p.complexity),
            prompt_variant: Some(p.prompt_variant),
            schema_version: Some(SCHEMA_VERSION.to_owned()),
        }
    }
}

fn id_from_source_file(source_file: &str) -> Option<String> {
    Path::new(source_file)
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
}

pub fn parse_jsonl(bytes: &[u8]) -> Result<Parsed, DatasetError> {
    parse_jsonl_with(bytes, &ComplexityThresholds::default())
}

/// Parses a dataset. Malformed lines are collected as [`LineError`]s;
/// only undecodable input is fatal. Blank lines are skipped.
pub fn parse_jsonl_with(bytes: &[u8], thresholds: &ComplexityThresholds) -> Result<Parsed, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DatasetError::Decode { offset: e.valid_up_to() })?;
    let mut parsed = Parsed::default();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                parsed.errors.push(LineError { line, field: None, message: format!("invalid JSON: {e}") });
                continue;
            }
        };
        let missing = |field: &str| LineError {
            line,
            field: Some(field.to_owned()),
            message: format!("missing required field `{field}`"),
        };
        let Some(reference_source) = rec.output else {
            parsed.errors.push(missing("output"));
            continue;
        };
        let Some(description) = rec.input else {
            parsed.errors.push(missing("input"));
            continue;
        };
        let source_file = rec.source_file.unwrap_or_default();
        let Some(id) = rec.id.or_else(|| id_from_source_file(&source_file)) else {
            parsed.errors.push(missing("id"));
            continue;
        };

        let mut note = |field: &'static str| {
            parsed.defaults_applied.push(AppliedDefault { line, point_id: id.clone(), field });
        };
        let instruction = rec.instruction.unwrap_or_else(|| {
            note("instruction");
            DEFAULT_INSTRUCTION.to_owned()
        });
        let category = rec.category.unwrap_or_else(|| {
            note("category");
            Category::OtherKernel
        });
        let pragmas = rec.pragmas.unwrap_or_else(|| {
            note("pragmas");
            Pragma::detect(&reference_source)
        });
        let complexity = rec.complexity.unwrap_or_else(|| {
            note("complexity");
            tag_complexity(&reference_source, thresholds)
        });
        let prompt_variant = rec.prompt_variant.unwrap_or_else(|| {
            note("prompt_variant");
            PromptVariant::MachineGen
        });
        if let Some(v) = rec.schema_version {
            parsed.manifest.schema_version = v;
        }

        parsed.manifest.points.push(DesignPoint {
            id,
            instruction,
            description,
            reference_source,
            source_file,
            category,
            pragmas,
            complexity,
            prompt_variant,
        });
    }
    Ok(parsed)
}

/// Which side of a split a manifest is meant for; test points need a
/// `source_file` to locate their functional test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Point id, or `#<index>` when the id itself is empty.
    pub point_id: String,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.point_id, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(manifest: &DatasetManifest, role: SplitRole) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (i, p) in manifest.points.iter().enumerate() {
        let key = if p.id.is_empty() { format!("#{i}") } else { p.id.clone() };
        let mut push = |field, message: String| {
            violations.push(Violation { point_id: key.clone(), field, message })
        };
        if p.id.is_empty() {
            push("id", "empty id".to_owned());
        } else if !seen.insert(p.id.as_str()) {
            push("id", format!("duplicate id: {}", p.id));
        }
        if p.reference_source.trim().is_empty() {
            push("reference_source", "empty reference_source".to_owned());
        }
        if role == SplitRole::Test && p.source_file.trim().is_empty() {
            push("source_file", "empty source_file (required for test points)".to_owned());
        }
    }
    ValidationReport { violations }
}

/// Seeded shuffle partition. The test side gets
/// `floor(n * test_parts / (train_parts + test_parts))` points and the
/// remainder goes to training; both sides keep input order.
pub fn split(
    manifest: &DatasetManifest,
    train_parts: usize,
    test_parts: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DatasetError> {
    if train_parts == 0 || test_parts == 0 {
        return Err(DatasetError::BadRatio { train: train_parts, test: test_parts });
    }
    if manifest.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let n = manifest.len();
    let n_test = n * test_parts / (train_parts + test_parts);

    let mut order: Vec<usize> = (0..n).collect();
    XorShift64Star::new(seed).shuffle(&mut order);
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();

    let side = |idx: &[usize]| DatasetManifest {
        points: idx.iter().map(|&i| manifest.points[i].clone()).collect(),
        split_seed: seed,
        schema_version: manifest.schema_version.clone(),
    };
    Ok((side(&train_idx), side(&test_idx)))
}

/// Writes one Alpaca-format JSON object per line and returns the byte
/// count. An empty manifest writes nothing.
pub fn export_training_jsonl<W: Write>(manifest: &DatasetManifest, mut sink: W) -> io::Result<u64> {
    let mut written = 0u64;
    for p in &manifest.points {
        let mut line = serde_json::to_vec(&Record::from(p)).map_err(io::Error::other)?;
        line.push(b'\n');
        sink.write_all(&line)?;
        written += line.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}
