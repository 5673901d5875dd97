//! Aggregation and time accounting over hand-built trajectories.

use std::collections::BTreeSet;

use hlsgen::dataset::{Category, Complexity, PromptVariant};
use hlsgen::feedback_loop::{IterationRecord, Stage, StageTimes};
use hlsgen::func_check::Phase;
use hlsgen::metrics::{aggregate, emit, time_report, GroupKey, MetricsError, ReportConfig, ReportFormat, CSV_HEADER};
use hlsgen::prompt::FeedbackKind;
use hlsgen::{EvalReport, FinalStatus, FunctionalResult, FunctionalStatus, Nanos, SyntaxResult, Trajectory};
use proptest::prelude::*;

const SEC: u64 = 1_000_000_000;

fn times(generate: u64, syntax: u64) -> StageTimes {
    Stage::ALL
        .iter()
        .map(|&s| {
            let v = match s {
                Stage::Generate => generate,
                Stage::Syntax => syntax,
                _ => 0,
            };
            (s, Nanos(v))
        })
        .collect()
}

fn record(index: u32, syntax: bool, func: bool, wall: StageTimes) -> IterationRecord {
    let functional = syntax.then(|| FunctionalResult {
        status: if func { FunctionalStatus::Pass } else { FunctionalStatus::Fail { defects: vec![] } },
        elapsed_by_phase: Phase::ALL.iter().map(|&p| (p, Nanos::ZERO)).collect(),
    });
    let syntax = SyntaxResult { passed: syntax, diagnostics: vec![], raw_output: String::new(), elapsed: Nanos::ZERO, timed_out: false };
    IterationRecord { index, bundle_digest: format!("d{index}"), candidate_code: String::new(), syntax, functional, wall_times: wall }
}

/// Trajectory whose records pass as listed in `steps` (syntax, functional).
fn traj(point: &str, sample: usize, n: usize, steps: &[(bool, bool)], complexity: Complexity) -> Trajectory {
    let records: Vec<_> = steps.iter().enumerate().map(|(i, &(s, f))| record(i as u32, s, f, times(SEC, 0))).collect();
    let final_status = match records.last() {
        None => FinalStatus::BackendError,
        Some(r) if !r.syntax.passed => FinalStatus::SyntaxFail,
        Some(r) if r.func_passed() => FinalStatus::FuncPass,
        Some(_) => FinalStatus::FuncFail,
    };
    Trajectory {
        point_id: point.into(),
        sample_index: sample,
        n_samples: n,
        records,
        final_status,
        backend_error: None,
        category: Category::OtherKernel,
        complexity,
        prompt_variant: PromptVariant::MachineGen,
        cot: true,
        max_feedback_iterations: 2,
        feedback: [FeedbackKind::Syntax, FeedbackKind::Functional].into(),
    }
}

fn cfg(k: &[u64], group_by: &[GroupKey]) -> ReportConfig {
    ReportConfig { k: k.to_vec(), group_by: group_by.to_vec(), ..ReportConfig::default() }
}

const PASS: (bool, bool) = (true, true);
const FFAIL: (bool, bool) = (true, false);
const SFAIL: (bool, bool) = (false, false);

#[test]
fn all_samples_pass() {
    let ts: Vec<_> = (0..3).map(|s| traj("p", s, 3, &[PASS], Complexity::Easy)).collect();
    let r = aggregate(&ts, cfg(&[3], &[]), false).unwrap();
    assert_eq!(r.groups.len(), 1);
    assert_eq!(r.groups[0].pass_at_k[0].functional, 1.0);
}

#[test]
fn group_mean_over_points() {
    let mut ts: Vec<_> = (0..3).map(|s| traj("a", s, 3, &[PASS], Complexity::Easy)).collect();
    ts.extend((0..3).map(|s| traj("b", s, 3, &[SFAIL], Complexity::Easy)));
    let r = aggregate(&ts, cfg(&[3], &[]), false).unwrap();
    assert_eq!(r.groups[0].points, 2);
    assert_eq!(r.groups[0].pass_at_k[0].functional, 0.5);
}

#[test]
fn complexity_groups_match_hand_tally() {
    // easy: e1 c_func=1/3, e2 c_func=0/3; medium: m1 c_func=2/3; difficult: none
    let mut ts = vec![];
    ts.extend([PASS, FFAIL, SFAIL].iter().enumerate().map(|(s, &st)| traj("e1", s, 3, &[st], Complexity::Easy)));
    ts.extend([SFAIL, SFAIL, FFAIL].iter().enumerate().map(|(s, &st)| traj("e2", s, 3, &[st], Complexity::Easy)));
    ts.extend([PASS, PASS, SFAIL].iter().enumerate().map(|(s, &st)| traj("m1", s, 3, &[st], Complexity::Medium)));
    let r = aggregate(&ts, cfg(&[1, 3], &[GroupKey::Complexity]), false).unwrap();
    let rows: Vec<_> = r.groups.iter().map(|g| (g.key.as_str(), g.value.as_str(), g.points)).collect();
    assert_eq!(rows, [("overall", "all", 3), ("complexity", "Easy", 2), ("complexity", "Medium", 1)]);

    let easy = &r.groups[1].pass_at_k;
    // pass@1 = c/n; syntax: e1 2/3, e2 1/3
    assert!((easy[0].syntax - 0.5).abs() < 1e-12);
    assert!((easy[0].functional - (1.0 / 3.0) / 2.0).abs() < 1e-12);
    // pass@3 with n=3 is 1 iff c>0
    assert_eq!(easy[1].syntax, 1.0);
    assert_eq!(easy[1].functional, 0.5);
    let medium = &r.groups[2].pass_at_k;
    assert!((medium[0].functional - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn at_iteration_scores_earlier_records() {
    let ts = vec![traj("p", 0, 1, &[SFAIL, FFAIL, PASS], Complexity::Easy)];
    let at = |i| {
        let c = ReportConfig { at_iteration: i, ..cfg(&[1], &[]) };
        let g = &aggregate(&ts, c, false).unwrap().groups[0].pass_at_k[0];
        (g.syntax, g.functional)
    };
    assert_eq!(at(Some(0)), (0.0, 0.0));
    assert_eq!(at(Some(1)), (1.0, 0.0));
    assert_eq!(at(Some(2)), (1.0, 1.0));
    assert_eq!(at(Some(9)), (1.0, 1.0));
    assert_eq!(at(None), (1.0, 1.0));
}

#[test]
fn mixed_sample_counts_name_the_point() {
    let ts = vec![traj("kernel_x", 0, 3, &[PASS], Complexity::Easy), traj("kernel_x", 1, 2, &[PASS], Complexity::Easy)];
    match aggregate(&ts, cfg(&[1], &[]), false).unwrap_err() {
        MetricsError::Data { point, .. } => assert_eq!(point, "kernel_x"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn k_beyond_n_is_a_data_error() {
    let ts = vec![traj("p", 0, 1, &[PASS], Complexity::Easy)];
    assert!(aggregate(&ts, cfg(&[3], &[]), false).is_err());
}

fn timed(point: &str, sample: usize, n: usize, generate: &[u64], cot: bool, fb: &[FeedbackKind]) -> Trajectory {
    let mut t = traj(point, sample, n, &[], Complexity::Easy);
    t.records = generate.iter().enumerate().map(|(i, &g)| record(i as u32, true, true, times(g, g / 10))).collect();
    t.final_status = FinalStatus::FuncPass;
    t.cot = cot;
    t.feedback = fb.iter().copied().collect();
    t
}

fn stat(report: &hlsgen::metrics::TimeReport, cell: usize, stage: Stage) -> hlsgen::metrics::StageStats {
    report.cells[cell].stages.iter().find(|s| s.stage == stage).unwrap().clone()
}

#[test]
fn single_trajectory_total() {
    let r = time_report(&[timed("p", 0, 1, &[2 * SEC], true, &[])]);
    assert_eq!(stat(&r, 0, Stage::Generate).total, Nanos(2 * SEC));
}

#[test]
fn two_trajectories_mean_and_total() {
    let r = time_report(&[timed("p", 0, 2, &[SEC], true, &[]), timed("p", 1, 2, &[3 * SEC], true, &[])]);
    let g = stat(&r, 0, Stage::Generate);
    assert_eq!((g.total, g.mean), (Nanos(4 * SEC), Nanos(2 * SEC)));
    assert_eq!((g.p50, g.p95), (Nanos(SEC), Nanos(3 * SEC)));
}

#[test]
fn two_config_cells_match_hand_sums() {
    let fb = [FeedbackKind::Syntax, FeedbackKind::Functional];
    let ts = vec![
        timed("a", 0, 3, &[100, 200], false, &[]),
        timed("a", 1, 3, &[300], false, &[]),
        timed("a", 2, 3, &[50, 50, 50], false, &[]),
        timed("a", 0, 3, &[1_000], true, &fb),
        timed("a", 1, 3, &[2_000, 7], true, &fb),
        timed("a", 2, 3, &[4_000], true, &fb),
    ];
    let r = time_report(&ts);
    assert_eq!(r.cells.len(), 2);
    assert_eq!((r.cells[0].cot, r.cells[0].feedback.as_str(), r.cells[0].trajectories), (false, "none", 3));
    assert_eq!((r.cells[1].cot, r.cells[1].feedback.as_str()), (true, "syntax+functional"));
    assert_eq!(stat(&r, 0, Stage::Generate).total, Nanos(100 + 200 + 300 + 150));
    assert_eq!(stat(&r, 0, Stage::Syntax).total, Nanos(10 + 20 + 30 + 15));
    assert_eq!(stat(&r, 1, Stage::Generate).total, Nanos(1_000 + 2_007 + 4_000));
    assert_eq!(stat(&r, 1, Stage::Generate).mean, Nanos(7_007 / 3));
    assert_eq!(stat(&r, 1, Stage::Compare).total, Nanos::ZERO);
}

#[test]
fn empty_report_is_valid_json() {
    let r = EvalReport::empty(cfg(&[1], &[]));
    let mut buf = vec![];
    let n = emit(&r, ReportFormat::Json, &mut buf).unwrap();
    assert_eq!(n as usize, buf.len());
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["groups"], serde_json::json!([]));
}

#[test]
fn one_group_is_one_csv_row() {
    let ts = vec![traj("p", 0, 1, &[PASS], Complexity::Easy)];
    let r = aggregate(&ts, cfg(&[1], &[]), false).unwrap();
    let mut buf = vec![];
    emit(&r, ReportFormat::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines, [CSV_HEADER, "overall,all,1,1,1,1"]);
}

#[test]
fn json_round_trips() {
    let mut ts: Vec<_> = [PASS, FFAIL, SFAIL].iter().enumerate().map(|(s, &st)| traj("e1", s, 3, &[st], Complexity::Easy)).collect();
    ts.extend([PASS, PASS, SFAIL].iter().enumerate().map(|(s, &st)| traj("m1", s, 3, &[st], Complexity::Medium)));
    let mut c = cfg(&[1, 2, 3], &[GroupKey::Complexity, GroupKey::Cot]);
    c.run.insert("seed".into(), "7".into());
    let r = aggregate(&ts, c, true).unwrap();
    let mut buf = vec![];
    emit(&r, ReportFormat::Json, &mut buf).unwrap();
    let back: EvalReport = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, r);
}

fn step() -> impl Strategy<Value = (bool, bool)> {
    prop_oneof![Just(PASS), Just(FFAIL), Just(SFAIL)]
}

proptest! {
    #[test]
    fn groups_partition_points_and_functional_never_exceeds_syntax(
        points in prop::collection::vec((prop::collection::vec(step(), 3), 0u8..3), 1..8),
    ) {
        let mut ts = vec![];
        for (i, (steps, cx)) in points.iter().enumerate() {
            let cx = [Complexity::Easy, Complexity::Medium, Complexity::Difficult][*cx as usize];
            for (s, &st) in steps.iter().enumerate() {
                ts.push(traj(&format!("p{i}"), s, 3, &[st], cx));
            }
        }
        let r = aggregate(&ts, cfg(&[1, 2, 3], &[GroupKey::Complexity, GroupKey::Category]), false).unwrap();
        let total = r.groups[0].points;
        prop_assert_eq!(total, points.len());
        for key in ["complexity", "category"] {
            let sum: usize = r.groups.iter().filter(|g| g.key == key).map(|g| g.points).sum();
            prop_assert_eq!(sum, total);
        }
        for p in &r.points {
            prop_assert!(p.c_func <= p.c_syntax && p.c_syntax <= p.n);
        }
        for g in &r.groups {
            for row in &g.pass_at_k {
                prop_assert!(row.functional <= row.syntax + 1e-12);
                prop_assert!((0.0..=1.0).contains(&row.syntax));
            }
        }
    }
}

#[test]
fn feedback_label_distinguishes_runs() {
    let mut a = traj("p", 0, 1, &[PASS], Complexity::Easy);
    let mut b = a.clone();
    a.feedback = BTreeSet::new();
    b.feedback = [FeedbackKind::Syntax].into();
    let r = aggregate(&[a, b], cfg(&[1], &[GroupKey::Feedback]), false).unwrap();
    let values: Vec<_> = r.groups.iter().skip(1).map(|g| g.value.as_str()).collect();
    assert_eq!(values, ["none", "syntax"]);
}
