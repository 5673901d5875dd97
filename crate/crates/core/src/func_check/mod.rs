//! Second repair step: run the candidate and the reference kernel under the
//! same test harness and compare their printed outputs at seeded random
//! positions.

mod compare;
mod harness;
mod runner;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use compare::{compare_outputs, parse_output, sampled_positions, values_match, OutputValue};
pub use harness::{build_harness, HarnessError, HarnessUnits, Side};
pub use runner::{
    compile_and_run, CompileStatus, FuncCheckConfig, FuncChecker, FunctionalCheck, RunLimits, RunOutcome, RunSummary,
    Toolchain,
};

use crate::syntax_check::Diagnostic;
use crate::timing::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutputShape {
    Scalar,
    Vector { len: usize },
    Matrix { rows: usize, cols: usize },
}

impl OutputShape {
    pub fn len(&self) -> usize {
        match *self {
            OutputShape::Scalar => 1,
            OutputShape::Vector { len } => len,
            OutputShape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat index to an index tuple.
    pub fn position(&self, flat: usize) -> Position {
        match *self {
            OutputShape::Scalar => Position(vec![flat]),
            OutputShape::Vector { .. } => Position(vec![flat]),
            OutputShape::Matrix { cols, .. } => Position(vec![flat / cols.max(1), flat % cols.max(1)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    All,
    Count(usize),
}

impl Serialize for SampleCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SampleCount::All => s.serialize_str("all"),
            SampleCount::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SampleCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(SampleCount::Count(n)),
            Raw::Word(w) if w.eq_ignore_ascii_case("all") => Ok(SampleCount::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("sample_count must be an integer or \"all\", got {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparePolicy {
    /// Positions drawn per comparison; clamped to the element count.
    pub sample_count: SampleCount,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_seed: u64,
}

impl Default for ComparePolicy {
    fn default() -> Self {
        Self {
            sample_count: SampleCount::Count(64),
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            sample_seed: 0,
        }
    }
}

/// How to exercise one design: the harness drives the kernel named
/// `entry_symbol` and prints `output_shape` values one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub harness_source: String,
    pub entry_symbol: String,
    pub output_shape: OutputShape,
    pub input_seed: u64,
    #[serde(default)]
    pub compare: ComparePolicy,
}

impl TestSpec {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.entry_symbol.trim().is_empty() {
            return Err("entry_symbol is empty".into());
        }
        if self.output_shape.is_empty() {
            return Err("output_shape has a zero dimension".into());
        }
        if self.compare.sample_count == SampleCount::Count(0) {
            return Err("sample_count must be at least 1".into());
        }
        if !(self.compare.rel_tol >= 0.0 && self.compare.abs_tol >= 0.0) {
            return Err("tolerances must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position(pub Vec<usize>);

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectKind {
    /// Both values parsed but differ beyond tolerance.
    Mismatch,
    /// Element missing, extra or unparseable.
    Shape,
}

/// One sampled position where candidate and reference disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub position: Position,
    #[serde(with = "float_repr")]
    pub expected: f64,
    #[serde(with = "float_repr")]
    pub actual: f64,
    pub kind: DefectKind,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DefectKind::Mismatch => {
                write!(f, "position {}: expected {}, got {}", self.position, self.expected, self.actual)
            }
            DefectKind::Shape => {
                let show = |v: f64| if v.is_nan() { "nothing".to_owned() } else { v.to_string() };
                write!(
                    f,
                    "position {}: output does not match the expected shape (expected {}, got {})",
                    self.position,
                    show(self.expected),
                    show(self.actual)
                )
            }
        }
    }
}

/// Non-finite floats as strings so JSON round-trips.
mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CompileRef,
    CompileCand,
    RunRef,
    RunCand,
    Compare,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::CompileRef, Phase::CompileCand, Phase::RunRef, Phase::RunCand, Phase::Compare];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FunctionalStatus {
    Pass,
    Fail { defects: Vec<Defect> },
    CandidateCompileError { message: String, diagnostics: Vec<Diagnostic> },
    RuntimeError { exit_code: Option<i32>, signal: Option<i32>, stderr: String },
    Timeout { phase: Phase },
}

impl FunctionalStatus {
    pub fn passed(&self) -> bool {
        matches!(self, FunctionalStatus::Pass)
    }

    /// Human-readable account of a failure that carries no defects.
    pub fn summary(&self) -> String {
        match self {
            FunctionalStatus::Pass => "all sampled outputs match".to_owned(),
            FunctionalStatus::Fail { defects } => format!("{} mismatching output positions", defects.len()),
            FunctionalStatus::CandidateCompileError { message, diagnostics } => {
                let mut s = message.clone();
                for d in diagnostics.iter().filter(|d| d.severity == crate::syntax_check::Severity::Error) {
                    s.push_str(&format!("\n- line {}: {}", d.line, d.message.lines().next().unwrap_or_default()));
                }
                s
            }
            FunctionalStatus::RuntimeError { exit_code, signal, stderr } => {
                let how = match (exit_code, signal) {
                    (Some(c), _) => format!("exited with status {c}"),
                    (None, Some(s)) => format!("was killed by signal {s}"),
                    _ => "terminated abnormally".to_owned(),
                };
                let tail = stderr.trim();
                if tail.is_empty() {
                    format!("the test program {how}")
                } else {
                    format!("the test program {how}: {tail}")
                }
            }
            FunctionalStatus::Timeout { phase } => format!("the test timed out during {phase:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalResult {
    pub status: FunctionalStatus,
    pub elapsed_by_phase: BTreeMap<Phase, Nanos>,
}

impl FunctionalResult {
    pub fn passed(&self) -> bool {
        self.status.passed()
    }

    pub fn phase(&self, phase: Phase) -> Nanos {
        self.elapsed_by_phase.get(&phase).copied().unwrap_or_default()
    }

    pub(crate) fn zeroed_phases() -> BTreeMap<Phase, Nanos> {
        Phase::ALL.iter().map(|&p| (p, Nanos::ZERO)).collect()
    }
}

#[derive(Debug, Error)]
pub enum FuncCheckError {
    #[error("compiler `{0}` not found")]
    CompilerNotFound(String),
    #[error("invalid test spec for `{point}`: {reason}")]
    InvalidSpec { point: String, reason: String },
    #[error("reference for `{point}` lacks entry symbol `{symbol}`")]
    ReferenceMissingEntry { point: String, symbol: String },
    #[error("reference for `{point}` failed to compile:\n{stderr}")]
    ReferenceCompile { point: String, stderr: String },
    #[error("reference for `{point}` failed to run: {detail}")]
    ReferenceRun { point: String, detail: String },
    #[error("reference output for `{point}` does not match the declared shape: {detail}")]
    ReferenceOutput { point: String, detail: String },
    #[error("test spec file: {0}")]
    SpecFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Test specs keyed by `source_file`.
pub type TestSpecs = BTreeMap<String, TestSpec>;

#[derive(Debug, Deserialize)]
struct SpecFile {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: Option<String>,
    specs: BTreeMap<String, SpecEntry>,
}

#[derive(Debug, Deserialize)]
struct SpecEntry {
    harness_source: Option<String>,
    harness_file: Option<PathBuf>,
    entry_symbol: String,
    output_shape: OutputShape,
    input_seed: u64,
    #[serde(default)]
    compare: ComparePolicy,
}

/// Loads a test-spec JSON file. Each entry gives its harness inline
/// (`harness_source`) or as a path relative to the file (`harness_file`).
pub fn load_test_specs(path: &Path) -> Result<TestSpecs, FuncCheckError> {
    let text = fs::read_to_string(path)?;
    parse_test_specs(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_test_specs(text: &str, base_dir: &Path) -> Result<TestSpecs, FuncCheckError> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| FuncCheckError::SpecFile(e.to_string()))?;
    let mut specs = TestSpecs::new();
    for (key, e) in file.specs {
        let harness_source = match (e.harness_source, e.harness_file) {
            (Some(src), _) => src,
            (None, Some(rel)) => fs::read_to_string(base_dir.join(&rel))
                .map_err(|err| FuncCheckError::SpecFile(format!("{key}: cannot read {}: {err}", rel.display())))?,
            (None, None) => return Err(FuncCheckError::SpecFile(format!("{key}: no harness_source or harness_file"))),
        };
        let spec = TestSpec {
            harness_source,
            entry_symbol: e.entry_symbol,
            output_shape: e.output_shape,
            input_seed: e.input_seed,
            compare: e.compare,
        };
        spec.check_invariants().map_err(|r| FuncCheckError::SpecFile(format!("{key}: {r}")))?;
        specs.insert(key, spec);
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_display() {
        assert_eq!(Position(vec![2, 3]).to_string(), "(2,3)");
        assert_eq!(OutputShape::Matrix { rows: 4, cols: 4 }.position(11), Position(vec![2, 3]));
        assert_eq!(OutputShape::Vector { len: 4 }.position(3).to_string(), "(3)");
    }

    #[test]
    fn defect_display_and_json() {
        let d = Defect { position: Position(vec![2, 3]), expected: 6.0, actual: 0.0, kind: DefectKind::Mismatch };
        assert_eq!(d.to_string(), "position (2,3): expected 6, got 0");
        let shape = Defect { position: Position(vec![4]), expected: 1.5, actual: f64::NAN, kind: DefectKind::Shape };
        let json = serde_json::to_string(&shape).unwrap();
        assert!(json.contains("\"nan\""));
        let back: Defect = serde_json::from_str(&json).unwrap();
        assert!(back.actual.is_nan());
        assert!(shape.to_string().contains("got nothing"));
    }

    #[test]
    fn sample_count_serde() {
        let p: ComparePolicy = serde_json::from_str(r#"{"sample_count":"all"}"#).unwrap();
        assert_eq!(p.sample_count, SampleCount::All);
        assert_eq!(p.rel_tol, 1e-6);
        let p: ComparePolicy = serde_json::from_str(r#"{"sample_count":8,"sample_seed":42}"#).unwrap();
        assert_eq!(p.sample_count, SampleCount::Count(8));
        assert!(serde_json::from_str::<ComparePolicy>(r#"{"sample_count":"some"}"#).is_err());
    }

    #[test]
    fn spec_file_inline_and_relative() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("h.c"), "int main(){return 0;}").unwrap();
        let text = r#"{"schema_version":"1","specs":{
            "a.c":{"harness_file":"h.c","entry_symbol":"a","output_shape":{"kind":"scalar"},"input_seed":1},
            "b.c":{"harness_source":"x","entry_symbol":"b","output_shape":{"kind":"matrix","rows":2,"cols":3},"input_seed":2,
                   "compare":{"sample_count":"all"}}}}"#;
        let specs = parse_test_specs(text, dir.path()).unwrap();
        assert_eq!(specs["a.c"].harness_source, "int main(){return 0;}");
        assert_eq!(specs["b.c"].output_shape.len(), 6);
        assert_eq!(specs["b.c"].compare.sample_count, SampleCount::All);
    }

    #[test]
    fn spec_invariants_enforced() {
        let bad = r#"{"specs":{"a.c":{"harness_source":"x","entry_symbol":"","output_shape":{"kind":"scalar"},"input_seed":1}}}"#;
        assert!(parse_test_specs(bad, Path::new(".")).is_err());
        let bad = r#"{"specs":{"a.c":{"harness_source":"x","entry_symbol":"a","output_shape":{"kind":"vector","len":0},"input_seed":1}}}"#;
        assert!(parse_test_specs(bad, Path::new(".")).is_err());
    }
}
