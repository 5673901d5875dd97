//! Generation and evaluation harness for LLM-written HLS C kernels.
//!
//! The pipeline: a [`dataset`] of design points feeds [`prompt`]s to an
//! [`llm`] backend; each candidate goes through the [`feedback_loop`]
//! ([`syntax_check`] then [`func_check`]) and the resulting trajectories are
//! scored by [`metrics`]. [`descgen`] writes descriptions for new points.

pub mod dataset;
pub mod descgen;
pub mod exec;
pub mod feedback_loop;
pub mod func_check;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod rng;
pub mod syntax_check;
pub mod timing;

pub use dataset::{Category, Complexity, DatasetManifest, DesignPoint, Pragma, PromptVariant};
pub use feedback_loop::{FinalStatus, IterationRecord, LoopConfig, LoopContext, Stage, Trajectory};
pub use func_check::{FuncChecker, FunctionalCheck, FunctionalResult, FunctionalStatus, TestSpec};
pub use llm::{Backend, Completion, GenerationParams};
pub use metrics::{pass_at_k, EvalReport};
pub use prompt::{PromptBuilder, PromptBundle};
pub use syntax_check::{Diagnostic, Severity, SyntaxCheck, SyntaxChecker, SyntaxResult};
pub use timing::Nanos;
