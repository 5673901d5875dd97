//! Message sequences sent to a generation backend.
//!
//! A bundle starts as `[System: CoT preamble]? + [User: instruction +
//! description]` and grows by exactly one User message per round of
//! feedback. Bundles are values: augmentation returns a new bundle.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::DesignPoint;
use crate::func_check::Defect;
use crate::syntax_check::{Diagnostic, Severity};

pub const COT_PREAMBLE_V1: &str = include_str!("../templates/cot_preamble_v1.txt");
pub const USER_TEMPLATE: &str = include_str!("../templates/user.txt");
pub const FEEDBACK_TEMPLATE: &str = include_str!("../templates/feedback.txt");

/// The shipped five-step chain-of-thought preamble.
pub fn cot_preamble() -> &'static str {
    COT_PREAMBLE_V1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Syntax,
    Functional,
}

impl FeedbackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::Syntax => "syntax",
            FeedbackKind::Functional => "functional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub kind: FeedbackKind,
    pub payload: String,
    pub previous_code: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
    pub cot_enabled: bool,
    pub feedback_history: Vec<FeedbackEntry>,
}

impl PromptBundle {
    /// Flat text form; hashing and cassette keys are computed over this.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "<|{}|>", m.role.as_str());
            out.push_str(&m.text);
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    fn prefix_len(&self) -> usize {
        if self.cot_enabled {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("syntax feedback needs at least one diagnostic")]
    NoDiagnostics,
    #[error("syntax feedback only carries errors, got a {0:?} diagnostic")]
    NonErrorDiagnostic(Severity),
    #[error("functional feedback needs at least one defect")]
    NoDefects,
}

/// Substitutes `{name}` placeholders in one pass, so inserted values are
/// never re-scanned. Unknown placeholders are left as they are.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub cot_preamble: String,
    pub user: String,
    pub feedback: String,
    /// Upper bound on bundle length; oldest feedback messages go first.
    pub max_messages: Option<usize>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            cot_preamble: COT_PREAMBLE_V1.to_owned(),
            user: USER_TEMPLATE.to_owned(),
            feedback: FEEDBACK_TEMPLATE.to_owned(),
            max_messages: None,
        }
    }
}

impl PromptTemplates {
    /// Loads `cot_preamble.txt`, `user.txt` and `feedback.txt` from `dir`,
    /// keeping the built-in text for any file that is absent.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("cot_preamble.txt", &mut t.cot_preamble),
            ("user.txt", &mut t.user),
            ("feedback.txt", &mut t.feedback),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    templates: PromptTemplates,
}

impl PromptBuilder {
    pub fn new(templates: PromptTemplates) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn build_initial(&self, point: &DesignPoint, cot: bool) -> PromptBundle {
        let mut messages = Vec::with_capacity(2);
        if cot {
            messages.push(Message {
                role: Role::System,
                text: self.templates.cot_preamble.trim_end().to_owned(),
            });
        }
        let user = fill_template(
            &self.templates.user,
            &[("instruction", &point.instruction), ("description", &point.description)],
        );
        messages.push(Message { role: Role::User, text: user.trim_end().to_owned() });
        PromptBundle { messages, cot_enabled: cot, feedback_history: Vec::new() }
    }

    pub fn augment_syntax(
        &self,
        bundle: &PromptBundle,
        diagnostics: &[Diagnostic],
        previous_code: &str,
    ) -> Result<PromptBundle, PromptError> {
        if diagnostics.is_empty() {
            return Err(PromptError::NoDiagnostics);
        }
        if let Some(d) = diagnostics.iter().find(|d| d.severity != Severity::Error) {
            return Err(PromptError::NonErrorDiagnostic(d.severity));
        }
        let mut ordered: Vec<&Diagnostic> = diagnostics.iter().collect();
        ordered.sort_by_key(|d| (d.line, d.column));
        let mut errors = String::new();
        for d in ordered {
            let mut lines = d.message.lines();
            let head = lines.next().unwrap_or_default();
            if d.column > 0 {
                let _ = write!(errors, "- line {}, column {}: {}", d.line, d.column, head);
            } else {
                let _ = write!(errors, "- line {}: {}", d.line, head);
            }
            for extra in lines {
                let _ = write!(errors, "\n    {extra}");
            }
            errors.push('\n');
        }
        Ok(self.append(bundle, FeedbackKind::Syntax, errors.trim_end(), previous_code))
    }

    pub fn augment_functional(
        &self,
        bundle: &PromptBundle,
        defects: &[Defect],
        previous_code: &str,
    ) -> Result<PromptBundle, PromptError> {
        if defects.is_empty() {
            return Err(PromptError::NoDefects);
        }
        let errors = defects.iter().map(|d| format!("- {d}")).collect::<Vec<_>>().join("\n");
        Ok(self.append(bundle, FeedbackKind::Functional, &errors, previous_code))
    }

    /// Functional-stage failure without element defects (harness compile
    /// error, crash, timeout), described in `summary`.
    pub fn augment_functional_failure(
        &self,
        bundle: &PromptBundle,
        summary: &str,
        previous_code: &str,
    ) -> PromptBundle {
        self.append(bundle, FeedbackKind::Functional, summary.trim_end(), previous_code)
    }

    fn append(&self, bundle: &PromptBundle, kind: FeedbackKind, errors: &str, code: &str) -> PromptBundle {
        let text = fill_template(&self.templates.feedback, &[("code", code.trim_end()), ("errors", errors)]);
        let mut next = bundle.clone();
        next.messages.push(Message { role: Role::User, text: text.trim_end().to_owned() });
        next.feedback_history.push(FeedbackEntry {
            kind,
            payload: errors.to_owned(),
            previous_code: code.to_owned(),
            iteration: bundle.feedback_history.len() as u32,
        });
        if let Some(cap) = self.templates.max_messages {
            let keep = next.prefix_len() + 1;
            while next.messages.len() > cap.max(keep) {
                let oldest_feedback = next.prefix_len();
                next.messages.remove(oldest_feedback);
            }
        }
        next
    }
}

/// `build_initial` with the built-in templates.
pub fn build_initial(point: &DesignPoint, cot: bool) -> PromptBundle {
    PromptBuilder::default().build_initial(point, cot)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::dataset::{Category, Complexity, PromptVariant, DEFAULT_INSTRUCTION};
    use crate::func_check::{DefectKind, Position};

    fn point(description: &str) -> DesignPoint {
        DesignPoint {
            id: "syrk".into(),
            instruction: DEFAULT_INSTRUCTION.into(),
            description: description.into(),
            reference_source: "void syrk() {}".into(),
            source_file: "syrk.c".into(),
            category: Category::MatrixLinearAlgebra,
            pragmas: BTreeSet::new(),
            complexity: Complexity::Easy,
            prompt_variant: PromptVariant::MachineGen,
        }
    }

    fn diag(line: u32, column: u32, message: &str) -> Diagnostic {
        Diagnostic {
            file: "candidate.c".into(),
            line,
            column,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn defect(r: usize, c: usize, expected: f64, actual: f64) -> Defect {
        Defect { position: Position(vec![r, c]), expected, actual, kind: DefectKind::Mismatch }
    }

    #[test]
    fn initial_without_cot() {
        let b = build_initial(&point("Compute C = A*A^T."), false);
        assert_eq!(b.messages.len(), 1);
        assert_eq!(b.messages[0].role, Role::User);
        assert!(b.messages[0].text.starts_with("Generate HLS code with the following instructions:"));
        assert!(b.messages[0].text.ends_with("Compute C = A*A^T."));
        assert!(b.feedback_history.is_empty());
    }

    #[test]
    fn initial_with_cot_prepends_preamble() {
        let plain = build_initial(&point("d"), false);
        let cot = build_initial(&point("d"), true);
        assert_eq!(cot.messages.len(), 2);
        assert_eq!(cot.messages[0].role, Role::System);
        for step in [
            "Understand FPGA characteristics",
            "Define program structure",
            "Develop logic",
            "Select data types and interfaces",
            "Finalize the code",
        ] {
            assert!(cot.messages[0].text.contains(step), "{step}");
        }
        assert_eq!(cot.messages[1], plain.messages[0]);
    }

    #[test]
    fn empty_description_has_no_trailing_blank() {
        let b = build_initial(&point(""), false);
        assert_eq!(b.messages[0].text, DEFAULT_INSTRUCTION);
    }

    #[test]
    fn preamble_steps_in_order() {
        let steps: Vec<String> = cot_preamble()
            .lines()
            .filter_map(|l| {
                let (num, rest) = l.split_once(". ")?;
                num.parse::<u32>().ok()?;
                Some(rest.split(':').next()?.to_owned())
            })
            .collect();
        assert_eq!(
            steps,
            [
                "Understand FPGA characteristics",
                "Define program structure",
                "Develop logic",
                "Select data types and interfaces",
                "Finalize the code",
            ]
        );
        assert_eq!(cot_preamble().as_bytes(), cot_preamble().as_bytes());
        assert!(cot_preamble().contains("HLS"));
    }

    #[test]
    fn syntax_feedback_lists_locations() {
        let builder = PromptBuilder::default();
        let b0 = builder.build_initial(&point("d"), false);
        let b1 = builder.augment_syntax(&b0, &[diag(12, 0, "expected ';'")], "int main(){}").unwrap();
        let last = &b1.messages.last().unwrap().text;
        assert!(last.contains("line 12"));
        assert!(last.contains("expected ';'"));
        assert!(last.contains("int main(){}"));
        assert_eq!(b1.feedback_history.len(), 1);
        assert_eq!(b1.feedback_history[0].kind, FeedbackKind::Syntax);
        assert_eq!(b0.messages.len(), 1, "original untouched");
        assert!(b0.feedback_history.is_empty());
    }

    #[test]
    fn syntax_feedback_sorted_by_source_position() {
        let builder = PromptBuilder::default();
        let b0 = builder.build_initial(&point("d"), false);
        let diags = [diag(9, 1, "third"), diag(2, 5, "first"), diag(4, 3, "second")];
        let b1 = builder.augment_syntax(&b0, &diags, "x").unwrap();
        let text = &b1.messages[1].text;
        let pos = |s: &str| text.find(s).unwrap();
        assert!(pos("line 2, column 5") < pos("line 4, column 3"));
        assert!(pos("line 4, column 3") < pos("line 9, column 1"));
    }

    #[test]
    fn contract_errors() {
        let builder = PromptBuilder::default();
        let b0 = builder.build_initial(&point("d"), false);
        assert_eq!(builder.augment_syntax(&b0, &[], "x"), Err(PromptError::NoDiagnostics));
        let mut w = diag(1, 1, "w");
        w.severity = Severity::Warning;
        assert_eq!(builder.augment_syntax(&b0, &[w], "x"), Err(PromptError::NonErrorDiagnostic(Severity::Warning)));
        assert_eq!(builder.augment_functional(&b0, &[], "x"), Err(PromptError::NoDefects));
    }

    #[test]
    fn functional_feedback_lists_defects() {
        let builder = PromptBuilder::default();
        let b0 = builder.build_initial(&point("d"), true);
        let b1 = builder
            .augment_functional(&b0, &[defect(2, 3, 6.0, 0.0), defect(0, 1, 1.5, 2.5)], "code")
            .unwrap();
        assert_eq!(b1.messages.len(), b0.messages.len() + 1);
        let text = &b1.messages.last().unwrap().text;
        assert!(text.contains("(2,3)"));
        assert!(text.contains("expected 6"));
        assert!(text.contains("got 0"));
        assert!(text.contains("(0,1)"));
        assert_eq!(b1.feedback_history[0].kind, FeedbackKind::Functional);
    }

    #[test]
    fn feedback_iterations_increase() {
        let builder = PromptBuilder::default();
        let mut b = builder.build_initial(&point("d"), false);
        for _ in 0..3 {
            b = builder.augment_syntax(&b, &[diag(1, 1, "e")], "c").unwrap();
        }
        let its: Vec<u32> = b.feedback_history.iter().map(|f| f.iteration).collect();
        assert_eq!(its, [0, 1, 2]);
    }

    #[test]
    fn message_cap_drops_oldest_feedback() {
        let builder = PromptBuilder::new(PromptTemplates { max_messages: Some(3), ..Default::default() });
        let mut b = builder.build_initial(&point("d"), true);
        for i in 0..3 {
            b = builder.augment_syntax(&b, &[diag(1, 1, &format!("err{i}"))], "c").unwrap();
        }
        assert_eq!(b.messages.len(), 3);
        assert_eq!(b.messages[0].role, Role::System);
        assert!(b.messages[2].text.contains("err2"));
        assert_eq!(b.feedback_history.len(), 3);
    }

    #[test]
    fn template_fill_is_single_pass() {
        let out = fill_template("{code}|{errors}|{other}", &[("code", "{errors}"), ("errors", "E")]);
        assert_eq!(out, "{errors}|E|{other}");
        assert_eq!(fill_template("int f() { return 0; }", &[("code", "x")]), "int f() { return 0; }");
    }

    proptest! {
        #[test]
        fn render_is_pure_and_augmentation_is_monotone(
            desc in "\\PC{0,60}",
            cot in any::<bool>(),
            rounds in proptest::collection::vec(("\\PC{1,30}", 1u32..200, any::<bool>()), 0..5),
        ) {
            let builder = PromptBuilder::default();
            let mut b = builder.build_initial(&point(&desc), cot);
            for (msg, line, syntax) in rounds {
                let before = b.clone();
                b = if syntax {
                    builder.augment_syntax(&b, &[diag(line, 1, &msg)], &msg).unwrap()
                } else {
                    builder.augment_functional(&b, &[defect(line as usize, 0, 1.0, 2.0)], &msg).unwrap()
                };
                prop_assert_eq!(b.messages.len(), before.messages.len() + 1);
                prop_assert_eq!(&b.messages[..before.messages.len()], &before.messages[..]);
                prop_assert_eq!(b.feedback_history.len(), before.feedback_history.len() + 1);
            }
            prop_assert_eq!(b.render(), b.clone().render());
            prop_assert_eq!(b.digest(), b.clone().digest());
        }

        #[test]
        fn cot_toggle_only_adds_preamble(desc in "\\PC{0,80}") {
            let on = build_initial(&point(&desc), true);
            let off = build_initial(&point(&desc), false);
            prop_assert_eq!(&on.messages[1..], &off.messages[..]);
            prop_assert_eq!(on.messages[0].role, Role::System);
        }
    }
}
