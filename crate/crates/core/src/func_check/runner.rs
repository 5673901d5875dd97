use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use super::harness::{build_harness, HarnessError, Side};
use super::{
    compare_outputs, parse_output, FuncCheckError, FunctionalResult, FunctionalStatus, OutputShape, Phase, TestSpec,
};
use crate::dataset::DesignPoint;
use crate::exec::{self, Limits};
use crate::syntax_check::{parse_diagnostics, Diagnostic};
use crate::timing::{self, Nanos};

const STDERR_EXCERPT: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toolchain {
    pub compiler: String,
    pub flags: Vec<String>,
    pub link_flags: Vec<String>,
}

impl Default for Toolchain {
    fn default() -> Self {
        Self {
            compiler: "gcc".to_owned(),
            flags: ["-x", "c", "-std=gnu99", "-O1", "-w", "-ffp-contract=off", "-fdiagnostics-color=never"]
                .map(str::to_owned)
                .to_vec(),
            link_flags: vec!["-x".to_owned(), "none".to_owned(), "-lm".to_owned()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunLimits {
    #[serde(with = "timing::millis")]
    pub compile_timeout: Duration,
    #[serde(with = "timing::millis")]
    pub run_timeout: Duration,
    pub max_output_bytes: usize,
    pub memory_limit_bytes: Option<u64>,
    pub isolate_network: bool,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            compile_timeout: Duration::from_secs(60),
            run_timeout: Duration::from_secs(10),
            max_output_bytes: 16 << 20,
            memory_limit_bytes: Some(1 << 30),
            isolate_network: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileStatus {
    Ok,
    Failed { stderr: String, diagnostics: Vec<Diagnostic> },
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub stdout_truncated: bool,
    pub timed_out: bool,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub compile: CompileStatus,
    /// Absent when compilation did not succeed.
    pub run: Option<RunSummary>,
    pub compile_time: Nanos,
    pub run_time: Nanos,
}

struct Binary {
    _dir: TempDir,
    exe: PathBuf,
}

fn compile(unit: &str, toolchain: &Toolchain, timeout: Duration) -> io::Result<(Result<Binary, CompileStatus>, Nanos)> {
    let dir = tempfile::Builder::new().prefix("hlsgen-func-").tempdir()?;
    fs::write(dir.path().join("unit.c"), unit)?;
    let mut cmd = Command::new(&toolchain.compiler);
    cmd.args(&toolchain.flags)
        .arg("unit.c")
        .arg("-o")
        .arg("unit")
        .args(&toolchain.link_flags)
        .current_dir(dir.path());
    let out = exec::run(cmd, &Limits { timeout, ..Limits::default() })?;
    let elapsed = Nanos::from(out.elapsed);
    if out.timed_out {
        return Ok((Err(CompileStatus::TimedOut), elapsed));
    }
    if !out.success() {
        let stderr = out.stderr_lossy();
        let diagnostics = parse_diagnostics(&stderr);
        return Ok((Err(CompileStatus::Failed { stderr, diagnostics }), elapsed));
    }
    let exe = dir.path().join("unit");
    Ok((Ok(Binary { _dir: dir, exe }), elapsed))
}

fn run_binary(bin: &Binary, limits: &RunLimits) -> io::Result<(RunSummary, Nanos)> {
    let scratch = tempfile::Builder::new().prefix("hlsgen-run-").tempdir()?;
    let mut cmd = Command::new(&bin.exe);
    cmd.current_dir(scratch.path()).env_clear();
    let out = exec::run(
        cmd,
        &Limits {
            timeout: limits.run_timeout,
            max_output_bytes: limits.max_output_bytes,
            memory_limit_bytes: limits.memory_limit_bytes,
            isolate_network: limits.isolate_network,
        },
    )?;
    let mut stderr = out.stderr_lossy();
    if stderr.len() > STDERR_EXCERPT {
        let mut cut = STDERR_EXCERPT;
        while !stderr.is_char_boundary(cut) {
            cut -= 1;
        }
        stderr.truncate(cut);
    }
    let summary = RunSummary {
        exit_code: out.exit_code,
        signal: out.signal,
        stdout: out.stdout_lossy(),
        stderr,
        stdout_truncated: out.stdout_truncated,
        timed_out: out.timed_out,
    };
    Ok((summary, Nanos::from(out.elapsed)))
}

/// Compiles one translation unit in a private temp dir and, if that
/// succeeds, runs it from an empty scratch dir with a cleared environment.
pub fn compile_and_run(unit: &str, toolchain: &Toolchain, limits: &RunLimits) -> io::Result<RunOutcome> {
    let (bin, compile_time) = compile(unit, toolchain, limits.compile_timeout)?;
    match bin {
        Ok(bin) => {
            let (run, run_time) = run_binary(&bin, limits)?;
            Ok(RunOutcome { compile: CompileStatus::Ok, run: Some(run), compile_time, run_time })
        }
        Err(status) => Ok(RunOutcome { compile: status, run: None, compile_time, run_time: Nanos::ZERO }),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuncCheckConfig {
    pub toolchain: Toolchain,
    pub limits: RunLimits,
}

/// Anything that can decide whether a candidate behaves like the reference.
pub trait FunctionalCheck: Send + Sync {
    fn check(&self, point: &DesignPoint, spec: &TestSpec, candidate: &str) -> Result<FunctionalResult, FuncCheckError>;

    fn version(&self) -> String {
        "unknown".to_owned()
    }
}

/// Harness-based checker. Reference executables are built once per
/// distinct reference unit and reused across iterations and threads.
pub struct FuncChecker {
    config: FuncCheckConfig,
    version: String,
    references: Mutex<HashMap<String, Arc<OnceCell<Binary>>>>,
}

impl std::fmt::Debug for FuncChecker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FuncChecker").field("config", &self.config).finish_non_exhaustive()
    }
}

impl FuncChecker {
    pub fn new(config: FuncCheckConfig) -> Result<Self, FuncCheckError> {
        if exec::find_executable(&config.toolchain.compiler).is_none() {
            return Err(FuncCheckError::CompilerNotFound(config.toolchain.compiler));
        }
        let version = exec::tool_version(&config.toolchain.compiler);
        Ok(Self { config, version, references: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &FuncCheckConfig {
        &self.config
    }

    /// Number of reference executables currently cached.
    pub fn cached_references(&self) -> usize {
        self.references.lock().unwrap().values().filter(|c| c.get().is_some()).count()
    }

    fn reference_binary(&self, point: &DesignPoint, unit: &str) -> Result<(Arc<OnceCell<Binary>>, Nanos), FuncCheckError> {
        let key = {
            let mut h = Sha256::new();
            h.update(unit.as_bytes());
            h.update(serde_json::to_vec(&self.config.toolchain).unwrap_or_default());
            hex::encode(h.finalize())
        };
        let cell = self.references.lock().unwrap().entry(key).or_default().clone();
        let mut spent = Nanos::ZERO;
        cell.get_or_try_init(|| {
            let (bin, t) = compile(unit, &self.config.toolchain, self.config.limits.compile_timeout)?;
            spent = t;
            bin.map_err(|status| FuncCheckError::ReferenceCompile {
                point: point.id.clone(),
                stderr: match status {
                    CompileStatus::Failed { stderr, .. } => stderr,
                    _ => "compilation timed out".to_owned(),
                },
            })
        })?;
        Ok((cell, spent))
    }

    fn reference_output(&self, point: &DesignPoint, unit: &str, shape: OutputShape, phases: &mut std::collections::BTreeMap<Phase, Nanos>) -> Result<String, FuncCheckError> {
        let (cell, compile_time) = self.reference_binary(point, unit)?;
        phases.insert(Phase::CompileRef, compile_time);
        let bin = cell.get().expect("initialized above");
        let (run, run_time) = run_binary(bin, &self.config.limits)?;
        phases.insert(Phase::RunRef, run_time);
        if !run.success() {
            let detail = if run.timed_out {
                "timed out".to_owned()
            } else {
                format!("exit {:?} signal {:?}: {}", run.exit_code, run.signal, run.stderr.trim())
            };
            return Err(FuncCheckError::ReferenceRun { point: point.id.clone(), detail });
        }
        let values = parse_output(&run.stdout);
        if values.len() != shape.len() || values.iter().any(Option::is_none) {
            return Err(FuncCheckError::ReferenceOutput {
                point: point.id.clone(),
                detail: format!("{} tokens for {} expected elements", values.len(), shape.len()),
            });
        }
        Ok(run.stdout)
    }
}

impl FunctionalCheck for FuncChecker {
    fn check(&self, point: &DesignPoint, spec: &TestSpec, candidate: &str) -> Result<FunctionalResult, FuncCheckError> {
        spec.check_invariants()
            .map_err(|reason| FuncCheckError::InvalidSpec { point: point.id.clone(), reason })?;
        let mut phases = FunctionalResult::zeroed_phases();
        let done = |status, phases| Ok(FunctionalResult { status, elapsed_by_phase: phases });

        let units = match build_harness(point, spec, candidate) {
            Ok(u) => u,
            Err(HarnessError::MissingEntry { symbol, side: Side::Reference }) => {
                return Err(FuncCheckError::ReferenceMissingEntry { point: point.id.clone(), symbol })
            }
            Err(e @ HarnessError::MissingEntry { side: Side::Candidate, .. }) => {
                return done(FunctionalStatus::CandidateCompileError { message: e.to_string(), diagnostics: Vec::new() }, phases)
            }
        };

        let expected = self.reference_output(point, &units.reference, spec.output_shape, &mut phases)?;

        let (bin, compile_time) = compile(&units.candidate, &self.config.toolchain, self.config.limits.compile_timeout)?;
        phases.insert(Phase::CompileCand, compile_time);
        let bin = match bin {
            Ok(b) => b,
            Err(CompileStatus::TimedOut) => return done(FunctionalStatus::Timeout { phase: Phase::CompileCand }, phases),
            Err(CompileStatus::Failed { diagnostics, .. }) => {
                let status = FunctionalStatus::CandidateCompileError {
                    message: "the candidate does not compile together with the test harness".to_owned(),
                    diagnostics,
                };
                return done(status, phases);
            }
            Err(CompileStatus::Ok) => unreachable!("compile never reports Ok as an error"),
        };

        let (run, run_time) = run_binary(&bin, &self.config.limits)?;
        phases.insert(Phase::RunCand, run_time);
        if run.timed_out {
            return done(FunctionalStatus::Timeout { phase: Phase::RunCand }, phases);
        }
        if !run.success() {
            let status = FunctionalStatus::RuntimeError { exit_code: run.exit_code, signal: run.signal, stderr: run.stderr };
            return done(status, phases);
        }

        let start = Instant::now();
        let status = compare_outputs(&expected, &run.stdout, spec.output_shape, &spec.compare);
        phases.insert(Phase::Compare, Nanos::from(start.elapsed()));
        done(status, phases)
    }

    fn version(&self) -> String {
        self.version.clone()
    }
}
