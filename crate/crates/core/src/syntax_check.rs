//! First repair step: run a C compiler front end in syntax-only mode and
//! turn its stderr into structured diagnostics.

use std::fmt;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Limits};
use crate::timing::{self, Nanos};

/// Name the candidate is written under; diagnostics refer to it.
pub const CANDIDATE_FILE: &str = "candidate.c";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    /// 0 when the compiler did not report a column.
    pub column: u32,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Note => "note",
        };
        if self.column > 0 {
            write!(f, "{}:{}:{}: {}: {}", self.file, self.line, self.column, sev, self.message)
        } else {
            write!(f, "{}:{}: {}: {}", self.file, self.line, sev, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxResult {
    pub passed: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub raw_output: String,
    pub elapsed: Nanos,
    #[serde(default)]
    pub timed_out: bool,
}

impl SyntaxResult {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    /// Builds a result whose `passed` flag follows the classification rule.
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>, raw_output: String, elapsed: Nanos) -> Self {
        let passed = !diagnostics.iter().any(|d| d.severity == Severity::Error);
        Self { passed, diagnostics, raw_output, elapsed, timed_out: false }
    }
}

static DIAGNOSTIC_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"^(?P<file>[^\s:][^:]*?):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?P<sev>fatal error|error|warning|note):\s?(?P<msg>.*)$",
    )
    .unwrap()
});

static CONTEXT_LINE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"^(?:[^\s:]+: (?:In |At |warning: |error: |note: |fatal error: |some warnings)|In file included from |\s+from \S+:\d+[:,]$|\d+ (?:warnings? and \d+ )?(?:errors?|warnings?) generated\.|compilation terminated\.)",
    )
    .unwrap()
});

/// Parses GCC/Clang one-line diagnostics. Source echo and caret lines that
/// follow a diagnostic are appended to its message; headers such as
/// `file.c: In function 'f':` and summaries are skipped. Never fails.
pub fn parse_diagnostics(raw_stderr: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = Vec::new();
    let mut open = false;
    for line in raw_stderr.lines() {
        if let Some(caps) = DIAGNOSTIC_LINE.captures(line) {
            let line_no = caps["line"].parse::<u32>().unwrap_or(0);
            let column = caps.name("col").and_then(|c| c.as_str().parse().ok()).unwrap_or(0);
            let message = caps["msg"].trim_end().to_owned();
            if line_no >= 1 && !message.is_empty() {
                let severity = match &caps["sev"] {
                    "warning" => Severity::Warning,
                    "note" => Severity::Note,
                    _ => Severity::Error,
                };
                out.push(Diagnostic {
                    file: caps["file"].to_owned(),
                    line: line_no,
                    column,
                    severity,
                    message,
                });
                open = true;
                continue;
            }
        }
        if line.trim().is_empty() || CONTEXT_LINE.is_match(line) {
            open = false;
            continue;
        }
        if open {
            if let Some(last) = out.last_mut() {
                last.message.push('\n');
                last.message.push_str(line.trim_end());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntaxCheckConfig {
    pub compiler: String,
    pub flags: Vec<String>,
    pub include_dirs: Vec<PathBuf>,
    #[serde(with = "timing::millis")]
    pub timeout: Duration,
}

impl Default for SyntaxCheckConfig {
    fn default() -> Self {
        Self {
            compiler: "gcc".to_owned(),
            flags: [
                "-fsyntax-only",
                "-x",
                "c",
                "-std=gnu99",
                "-fdiagnostics-color=never",
                "-Wunknown-pragmas",
            ]
            .map(str::to_owned)
            .to_vec(),
            include_dirs: Vec::new(),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("compiler `{0}` not found")]
    CompilerNotFound(String),
    #[error("refusing to check an empty source")]
    EmptySource,
    #[error("i/o while checking: {0}")]
    Io(#[from] io::Error),
}

/// Anything that can classify a candidate source as syntactically valid.
pub trait SyntaxCheck: Send + Sync {
    fn check(&self, source: &str) -> Result<SyntaxResult, CheckError>;

    fn version(&self) -> String {
        "unknown".to_owned()
    }
}

/// Stateless wrapper around a compiler executable. Each check gets its own
/// temporary directory.
#[derive(Debug, Clone)]
pub struct SyntaxChecker {
    config: SyntaxCheckConfig,
    version: String,
}

impl SyntaxChecker {
    pub fn new(config: SyntaxCheckConfig) -> Result<Self, CheckError> {
        if exec::find_executable(&config.compiler).is_none() {
            return Err(CheckError::CompilerNotFound(config.compiler));
        }
        let version = exec::tool_version(&config.compiler);
        Ok(Self { config, version })
    }

    pub fn config(&self) -> &SyntaxCheckConfig {
        &self.config
    }
}

impl SyntaxCheck for SyntaxChecker {
    fn check(&self, source: &str) -> Result<SyntaxResult, CheckError> {
        if source.trim().is_empty() {
            return Err(CheckError::EmptySource);
        }
        let start = Instant::now();
        let dir = tempfile::Builder::new().prefix("hlsgen-syntax-").tempdir()?;
        fs::write(dir.path().join(CANDIDATE_FILE), source)?;

        let mut cmd = Command::new(&self.config.compiler);
        cmd.args(&self.config.flags);
        for inc in &self.config.include_dirs {
            cmd.arg("-I").arg(inc);
        }
        cmd.arg(CANDIDATE_FILE).current_dir(dir.path());
        let limits = Limits { timeout: self.config.timeout, ..Limits::default() };
        let out = exec::run(cmd, &limits).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => CheckError::CompilerNotFound(self.config.compiler.clone()),
            _ => CheckError::Io(e),
        })?;

        let mut raw_output = out.stderr_lossy();
        raw_output.push_str(&out.stdout_lossy());
        let mut diagnostics = parse_diagnostics(&raw_output);
        let elapsed = Nanos::from(start.elapsed());

        if out.timed_out {
            diagnostics.push(Diagnostic {
                file: CANDIDATE_FILE.to_owned(),
                line: 1,
                column: 0,
                severity: Severity::Error,
                message: format!("syntax check timed out after {:?}", self.config.timeout),
            });
            let mut result = SyntaxResult::from_diagnostics(diagnostics, raw_output, elapsed);
            result.timed_out = true;
            return Ok(result);
        }
        let has_error = diagnostics.iter().any(|d| d.severity == Severity::Error);
        if !out.success() && !has_error {
            let status = match (out.exit_code, out.signal) {
                (Some(code), _) => format!("status {code}"),
                (None, Some(sig)) => format!("signal {sig}"),
                _ => "unknown status".to_owned(),
            };
            let first = raw_output.lines().find(|l| !l.trim().is_empty()).unwrap_or("no output");
            diagnostics.push(Diagnostic {
                file: CANDIDATE_FILE.to_owned(),
                line: 1,
                column: 0,
                severity: Severity::Error,
                message: format!("compiler exited with {status}: {first}"),
            });
        }
        Ok(SyntaxResult::from_diagnostics(diagnostics, raw_output, elapsed))
    }

    fn version(&self) -> String {
        self.version.clone()
    }
}
