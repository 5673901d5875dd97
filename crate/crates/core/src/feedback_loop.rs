//! The generate → syntax check → functional check repair loop.
//!
//! Iteration 0 draws all `n` candidates with one request. Each candidate
//! then follows its own repair chain: a failing check appends one feedback
//! message and asks for a single fresh completion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, Complexity, DesignPoint, PromptVariant};
use crate::func_check::{FuncCheckError, FunctionalCheck, FunctionalResult, FunctionalStatus, Phase, TestSpec};
use crate::llm::{extract_code, Backend, GenerationParams};
use crate::prompt::{FeedbackKind, PromptBuilder, PromptBundle, PromptError};
use crate::syntax_check::{CheckError, SyntaxCheck, SyntaxResult};
use crate::timing::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Syntax,
    FuncCompile,
    FuncRun,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Generate, Stage::Syntax, Stage::FuncCompile, Stage::FuncRun, Stage::Compare];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Syntax => "syntax",
            Stage::FuncCompile => "func_compile",
            Stage::FuncRun => "func_run",
            Stage::Compare => "compare",
        }
    }
}

pub type StageTimes = BTreeMap<Stage, Nanos>;

fn zero_times() -> StageTimes {
    Stage::ALL.iter().map(|&s| (s, Nanos::ZERO)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub bundle_digest: String,
    pub candidate_code: String,
    pub syntax: SyntaxResult,
    /// Present only when `syntax.passed`.
    pub functional: Option<FunctionalResult>,
    pub wall_times: StageTimes,
}

impl IterationRecord {
    pub fn func_passed(&self) -> bool {
        self.functional.as_ref().is_some_and(FunctionalResult::passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FinalStatus {
    #[serde(rename = "SyntaxPass+FuncPass")]
    FuncPass,
    #[serde(rename = "SyntaxPass+FuncFail")]
    FuncFail,
    SyntaxFail,
    BackendError,
}

impl fmt::Display for FinalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalStatus::FuncPass => "SyntaxPass+FuncPass",
            FinalStatus::FuncFail => "SyntaxPass+FuncFail",
            FinalStatus::SyntaxFail => "SyntaxFail",
            FinalStatus::BackendError => "BackendError",
        })
    }
}

/// One candidate's path through the loop, with the grouping tags the
/// metrics need so trajectories are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub point_id: String,
    pub sample_index: usize,
    pub n_samples: usize,
    pub records: Vec<IterationRecord>,
    pub final_status: FinalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
    pub category: Category,
    pub complexity: Complexity,
    pub prompt_variant: PromptVariant,
    pub cot: bool,
    pub max_feedback_iterations: u32,
    pub feedback: BTreeSet<FeedbackKind>,
}

impl Trajectory {
    /// Same trajectory with every measured duration zeroed.
    pub fn without_timings(&self) -> Trajectory {
        let mut t = self.clone();
        for r in &mut t.records {
            r.wall_times = zero_times();
            r.syntax.elapsed = Nanos::ZERO;
            if let Some(f) = r.functional.as_mut() {
                for v in f.elapsed_by_phase.values_mut() {
                    *v = Nanos::ZERO;
                }
            }
        }
        t
    }

    /// Sum of each stage over all records.
    pub fn stage_totals(&self) -> StageTimes {
        let mut totals = zero_times();
        for r in &self.records {
            for (stage, t) in &r.wall_times {
                *totals.entry(*stage).or_default() += *t;
            }
        }
        totals
    }

    fn finalize(&mut self) {
        self.final_status = match self.records.last() {
            _ if self.backend_error.is_some() => FinalStatus::BackendError,
            None => FinalStatus::BackendError,
            Some(r) if !r.syntax.passed => FinalStatus::SyntaxFail,
            Some(r) if r.func_passed() => FinalStatus::FuncPass,
            Some(_) => FinalStatus::FuncFail,
        };
    }
}

/// Label for a feedback set, e.g. `syntax+functional` or `none`.
pub fn feedback_label(kinds: &BTreeSet<FeedbackKind>) -> String {
    if kinds.is_empty() {
        "none".to_owned()
    } else {
        kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// 0 means single shot.
    pub max_feedback_iterations: u32,
    pub cot: bool,
    pub n_samples: usize,
    pub params: GenerationParams,
    pub which_feedback: BTreeSet<FeedbackKind>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_feedback_iterations: 2,
            cot: true,
            n_samples: 3,
            params: GenerationParams::default(),
            which_feedback: [FeedbackKind::Syntax, FeedbackKind::Functional].into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("design point `{0}` has no test spec")]
    MissingTestSpec(String),
    #[error("backend returned {got} candidates, expected {expected}")]
    CandidateCount { expected: usize, got: usize },
    #[error(transparent)]
    Syntax(#[from] CheckError),
    #[error(transparent)]
    Functional(#[from] FuncCheckError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// The collaborators one loop run needs.
#[derive(Clone, Copy)]
pub struct LoopContext<'a> {
    pub backend: &'a dyn Backend,
    pub prompts: &'a PromptBuilder,
    pub syntax: &'a dyn SyntaxCheck,
    pub functional: &'a dyn FunctionalCheck,
}

/// Runs the loop for every sample of `point`. Errors are reserved for
/// broken inputs (missing spec, broken reference, checker I/O); backend
/// failures end the affected trajectories with `BackendError` instead.
pub fn run(point: &DesignPoint, spec: Option<&TestSpec>, cfg: &LoopConfig, ctx: LoopContext<'_>) -> Result<Vec<Trajectory>, LoopError> {
    let n = cfg.n_samples;
    if n == 0 {
        return Err(LoopError::NoSamples);
    }
    let spec = spec.ok_or_else(|| LoopError::MissingTestSpec(point.id.clone()))?;

    let blank = |sample_index| Trajectory {
        point_id: point.id.clone(),
        sample_index,
        n_samples: n,
        records: Vec::new(),
        final_status: FinalStatus::BackendError,
        backend_error: None,
        category: point.category,
        complexity: point.complexity,
        prompt_variant: point.prompt_variant,
        cot: cfg.cot,
        max_feedback_iterations: cfg.max_feedback_iterations,
        feedback: cfg.which_feedback.clone(),
    };

    let initial = ctx.prompts.build_initial(point, cfg.cot);
    let batch_params = GenerationParams { n_samples: n, ..cfg.params.clone() };
    let start = Instant::now();
    let batch = ctx.backend.generate(&initial, &batch_params);
    let batch_time = Nanos::from(start.elapsed());
    let batch = match batch {
        Ok(b) if b.len() == n => b,
        Ok(b) => return Err(LoopError::CandidateCount { expected: n, got: b.len() }),
        Err(e) => {
            tracing::warn!(point = %point.id, error = %e, "initial generation failed");
            return Ok((0..n)
                .map(|s| {
                    let mut t = blank(s);
                    t.backend_error = Some(e.to_string());
                    t.finalize();
                    t
                })
                .collect());
        }
    };

    let share = batch_time.0 / n as u64;
    let remainder = batch_time.0 % n as u64;
    batch
        .into_iter()
        .enumerate()
        .map(|(s, completion)| {
            let gen0 = Nanos(share + if s == 0 { remainder } else { 0 });
            let mut traj = blank(s);
            repair_chain(point, spec, cfg, ctx, initial.clone(), completion.text, gen0, &mut traj)?;
            traj.finalize();
            Ok(traj)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn repair_chain(
    point: &DesignPoint,
    spec: &TestSpec,
    cfg: &LoopConfig,
    ctx: LoopContext<'_>,
    mut bundle: PromptBundle,
    first_text: String,
    first_gen: Nanos,
    traj: &mut Trajectory,
) -> Result<(), LoopError> {
    let single = GenerationParams { n_samples: 1, ..cfg.params.clone() };
    let mut pending = Some((first_text, first_gen));
    for index in 0..=cfg.max_feedback_iterations {
        let (text, gen_time) = match pending.take() {
            Some(p) => p,
            None => {
                let start = Instant::now();
                let out = ctx.backend.generate(&bundle, &single);
                let t = Nanos::from(start.elapsed());
                match out {
                    Ok(mut c) if !c.is_empty() => (c.swap_remove(0).text, t),
                    Ok(_) => return Err(LoopError::CandidateCount { expected: 1, got: 0 }),
                    Err(e) => {
                        tracing::warn!(point = %point.id, sample = traj.sample_index, error = %e, "generation failed");
                        traj.backend_error = Some(e.to_string());
                        return Ok(());
                    }
                }
            }
        };
        let code = extract_code(&text);
        let mut wall = zero_times();
        wall.insert(Stage::Generate, gen_time);

        let syntax = ctx.syntax.check(&code)?;
        wall.insert(Stage::Syntax, syntax.elapsed);
        let last = index == cfg.max_feedback_iterations;

        if !syntax.passed {
            let next = (!last && cfg.which_feedback.contains(&FeedbackKind::Syntax)).then(|| {
                let errors: Vec<_> = syntax.errors().cloned().collect();
                ctx.prompts.augment_syntax(&bundle, &errors, &code)
            });
            traj.records.push(record(index, &bundle, code, syntax, None, wall));
            match next {
                Some(b) => bundle = b?,
                None => return Ok(()),
            }
            continue;
        }

        let functional = ctx.functional.check(point, spec, &code)?;
        wall.insert(Stage::FuncCompile, functional.phase(Phase::CompileRef) + functional.phase(Phase::CompileCand));
        wall.insert(Stage::FuncRun, functional.phase(Phase::RunRef) + functional.phase(Phase::RunCand));
        wall.insert(Stage::Compare, functional.phase(Phase::Compare));
        if functional.passed() || last || !cfg.which_feedback.contains(&FeedbackKind::Functional) {
            traj.records.push(record(index, &bundle, code, syntax, Some(functional), wall));
            return Ok(());
        }
        let next = match &functional.status {
            FunctionalStatus::Fail { defects } => ctx.prompts.augment_functional(&bundle, defects, &code)?,
            other => ctx.prompts.augment_functional_failure(&bundle, &other.summary(), &code),
        };
        traj.records.push(record(index, &bundle, code, syntax, Some(functional), wall));
        bundle = next;
    }
    Ok(())
}

fn record(
    index: u32,
    bundle: &PromptBundle,
    candidate_code: String,
    syntax: SyntaxResult,
    functional: Option<FunctionalResult>,
    wall_times: StageTimes,
) -> IterationRecord {
    IterationRecord { index, bundle_digest: bundle.digest(), candidate_code, syntax, functional, wall_times }
}
