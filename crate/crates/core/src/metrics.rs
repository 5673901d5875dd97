//! pass@k, grouped aggregation over trajectories, stage time statistics
//! and report emission.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback_loop::{feedback_label, FinalStatus, Stage, StageTimes, Trajectory};
use crate::timing::Nanos;

pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("pass@k undefined for n={n}, c={c}, k={k} (need 1 <= k <= n and c <= n)")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("point `{point}`: {detail}")]
    Data { point: String, detail: String },
    #[error("unknown group key `{0}` (expected complexity, category, variant, cot, iterations or feedback)")]
    UnknownGroupKey(String),
}

/// Unbiased estimator `1 - C(n-c, k) / C(n, k)`, evaluated as
/// `1 - prod_{i=n-c+1}^{n} (1 - k/i)` so no binomial is ever formed.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k == 0 || k > n || c > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let prod: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - prod)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Complexity,
    Category,
    Variant,
    Cot,
    Iterations,
    Feedback,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Complexity => "complexity",
            GroupKey::Category => "category",
            GroupKey::Variant => "variant",
            GroupKey::Cot => "cot",
            GroupKey::Iterations => "iterations",
            GroupKey::Feedback => "feedback",
        }
    }

    fn value_of(self, p: &PointOutcome) -> String {
        match self {
            GroupKey::Complexity => p.complexity.clone(),
            GroupKey::Category => p.category.clone(),
            GroupKey::Variant => p.variant.clone(),
            GroupKey::Cot => p.cot.to_string(),
            GroupKey::Iterations => p.iterations.to_string(),
            GroupKey::Feedback => p.feedback.clone(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupKey {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "complexity" => GroupKey::Complexity,
            "category" => GroupKey::Category,
            "variant" | "prompt_variant" => GroupKey::Variant,
            "cot" => GroupKey::Cot,
            "iterations" | "budget" => GroupKey::Iterations,
            "feedback" => GroupKey::Feedback,
            _ => return Err(MetricsError::UnknownGroupKey(s.to_owned())),
        })
    }
}

/// Per-point sample tally under one run configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub point_id: String,
    pub n: u64,
    pub c_syntax: u64,
    pub c_func: u64,
    pub complexity: String,
    pub category: String,
    pub variant: String,
    pub cot: bool,
    pub iterations: u32,
    pub feedback: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_totals: Option<StageTimes>,
}

/// Whether the sample counts as passing, judged at record
/// `min(at, last)` or, with `at = None`, by its final state.
fn sample_passes(t: &Trajectory, at: Option<u32>) -> (bool, bool) {
    match at {
        None => {
            let syntax = t.records.last().is_some_and(|r| r.syntax.passed);
            (syntax, t.final_status == FinalStatus::FuncPass)
        }
        Some(i) => {
            let Some(r) = t.records.get(i as usize).or(t.records.last()) else {
                return (false, false);
            };
            (r.syntax.passed, r.func_passed())
        }
    }
}

type RunKey = (String, bool, u32, String);

/// Folds trajectories into one outcome per (point, cot, budget, feedback).
/// Outcomes come out sorted by that key.
pub fn point_outcomes(trajectories: &[Trajectory], at_iteration: Option<u32>, with_times: bool) -> Result<Vec<PointOutcome>, MetricsError> {
    let mut groups: BTreeMap<RunKey, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        let key = (t.point_id.clone(), t.cot, t.max_feedback_iterations, feedback_label(&t.feedback));
        groups.entry(key).or_default().push(t);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((point_id, cot, iterations, feedback), ts) in groups {
        let data_err = |detail: String| MetricsError::Data { point: point_id.clone(), detail };
        let n = ts[0].n_samples;
        if let Some(t) = ts.iter().find(|t| t.n_samples != n) {
            return Err(data_err(format!("mixed sample counts ({n} and {})", t.n_samples)));
        }
        let indices: BTreeSet<usize> = ts.iter().map(|t| t.sample_index).collect();
        if indices.len() != ts.len() {
            return Err(data_err("duplicate sample_index".to_owned()));
        }
        if ts.len() != n {
            return Err(data_err(format!("expected {n} samples, found {}", ts.len())));
        }
        let first = ts[0];
        if ts.iter().any(|t| (t.category, t.complexity, t.prompt_variant) != (first.category, first.complexity, first.prompt_variant)) {
            return Err(data_err("samples disagree on point tags".to_owned()));
        }
        let (mut c_syntax, mut c_func) = (0, 0);
        let mut totals: Option<StageTimes> = with_times.then(BTreeMap::new);
        for t in &ts {
            let (s, f) = sample_passes(t, at_iteration);
            c_syntax += u64::from(s);
            c_func += u64::from(s && f);
            if let Some(acc) = totals.as_mut() {
                for (stage, v) in t.stage_totals() {
                    *acc.entry(stage).or_default() += v;
                }
            }
        }
        out.push(PointOutcome {
            point_id,
            n: n as u64,
            c_syntax,
            c_func,
            complexity: first.complexity.to_string(),
            category: first.category.to_string(),
            variant: first.prompt_variant.to_string(),
            cot,
            iterations,
            feedback,
            stage_totals: totals,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: u64,
    pub syntax: f64,
    pub functional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// `overall` or a group key name.
    pub key: String,
    pub value: String,
    pub points: usize,
    pub pass_at_k: Vec<PassAtK>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: Stage,
    pub total: Nanos,
    pub mean: Nanos,
    pub p50: Nanos,
    pub p95: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeCell {
    pub cot: bool,
    pub feedback: String,
    pub iterations: u32,
    pub trajectories: usize,
    pub stages: Vec<StageStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeReport {
    pub cells: Vec<TimeCell>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k: Vec<u64>,
    pub group_by: Vec<GroupKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_iteration: Option<u32>,
    /// Free-form run facts (seed, backend, checker versions).
    #[serde(default)]
    pub run: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub config: ReportConfig,
    pub groups: Vec<GroupReport>,
    pub points: Vec<PointOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<TimeReport>,
}

impl EvalReport {
    pub fn empty(config: ReportConfig) -> Self {
        Self { schema_version: REPORT_SCHEMA_VERSION.to_owned(), config, groups: Vec::new(), points: Vec::new(), timings: None }
    }
}

fn group_row(key: &str, value: String, points: &[&PointOutcome], ks: &[u64]) -> Result<GroupReport, MetricsError> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let (mut syn, mut fun) = (0.0, 0.0);
        for p in points {
            let domain = |e| match e {
                MetricsError::Domain { .. } => MetricsError::Data { point: p.point_id.clone(), detail: e.to_string() },
                other => other,
            };
            syn += pass_at_k(p.n, p.c_syntax, k).map_err(domain)?;
            fun += pass_at_k(p.n, p.c_func, k).map_err(domain)?;
        }
        let m = points.len() as f64;
        rows.push(PassAtK { k, syntax: syn / m, functional: fun / m });
    }
    Ok(GroupReport { key: key.to_owned(), value, points: points.len(), pass_at_k: rows })
}

/// Mean over points of pass@k for each requested `k`, overall and per
/// value of each grouping key. Groups with no points never appear.
/// Timings are attached only when `with_timings` is set, so that reports
/// of identical runs stay byte-identical.
pub fn aggregate(
    trajectories: &[Trajectory],
    config: ReportConfig,
    with_timings: bool,
) -> Result<EvalReport, MetricsError> {
    let outcomes = point_outcomes(trajectories, config.at_iteration, with_timings)?;
    let mut report = EvalReport::empty(config);
    if !outcomes.is_empty() {
        let all: Vec<&PointOutcome> = outcomes.iter().collect();
        report.groups.push(group_row("overall", "all".to_owned(), &all, &report.config.k)?);
        for &key in &report.config.group_by {
            let mut by_value: BTreeMap<String, Vec<&PointOutcome>> = BTreeMap::new();
            for p in &outcomes {
                by_value.entry(key.value_of(p)).or_default().push(p);
            }
            for (value, pts) in by_value {
                report.groups.push(group_row(key.as_str(), value, &pts, &report.config.k)?);
            }
        }
    }
    if with_timings {
        report.timings = Some(time_report(trajectories));
    }
    report.points = outcomes;
    Ok(report)
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Stage statistics over per-trajectory stage sums, one cell per
/// (cot, feedback, iteration budget).
pub fn time_report(trajectories: &[Trajectory]) -> TimeReport {
    let mut cells: BTreeMap<(bool, String, u32), Vec<StageTimes>> = BTreeMap::new();
    for t in trajectories {
        cells
            .entry((t.cot, feedback_label(&t.feedback), t.max_feedback_iterations))
            .or_default()
            .push(t.stage_totals());
    }
    let cells = cells
        .into_iter()
        .map(|((cot, feedback, iterations), per_traj)| {
            let stages = Stage::ALL
                .iter()
                .map(|&stage| {
                    let mut v: Vec<u64> = per_traj.iter().map(|t| t.get(&stage).copied().unwrap_or_default().0).collect();
                    v.sort_unstable();
                    let total: u64 = v.iter().sum();
                    StageStats {
                        stage,
                        total: Nanos(total),
                        mean: Nanos(total / v.len() as u64),
                        p50: Nanos(percentile(&v, 0.50)),
                        p95: Nanos(percentile(&v, 0.95)),
                    }
                })
                .collect();
            TimeCell { cot, feedback, iterations, trajectories: per_traj.len(), stages }
        })
        .collect();
    TimeReport { cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown report format `{s}` (expected json or csv)")),
        }
    }
}

struct Counting<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for Counting<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub const CSV_HEADER: &str = "group,value,points,k,syntax_pass_at_k,functional_pass_at_k";

/// Writes the report and returns the number of bytes written.
pub fn emit<W: Write>(report: &EvalReport, format: ReportFormat, sink: W) -> io::Result<u64> {
    let mut w = Counting { inner: sink, bytes: 0 };
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            writeln!(w, "{CSV_HEADER}")?;
            for g in &report.groups {
                for row in &g.pass_at_k {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        csv_field(&g.key),
                        csv_field(&g.value),
                        g.points,
                        row.k,
                        row.syntax,
                        row.functional
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(w.bytes)
}
