use super::{ComparePolicy, Defect, DefectKind, FunctionalStatus, OutputShape, SampleCount};
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputValue {
    Int(i64),
    Float(f64),
}

impl OutputValue {
    fn parse(token: &str) -> Option<Self> {
        let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(v) = token.parse::<i64>() {
                return Some(OutputValue::Int(v));
            }
        }
        token.parse::<f64>().ok().map(OutputValue::Float)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            OutputValue::Int(v) => v as f64,
            OutputValue::Float(v) => v,
        }
    }
}

/// Whitespace-separated tokens; `None` marks an unparseable token.
pub fn parse_output(stdout: &str) -> Vec<Option<OutputValue>> {
    stdout.split_whitespace().map(OutputValue::parse).collect()
}

/// Integers compare exactly; anything involving a float uses
/// `|e - a| <= abs_tol + rel_tol * |e|`. NaN matches only NaN.
pub fn values_match(expected: OutputValue, actual: OutputValue, policy: &ComparePolicy) -> bool {
    match (expected, actual) {
        (OutputValue::Int(e), OutputValue::Int(a)) => e == a,
        _ => {
            let (e, a) = (expected.as_f64(), actual.as_f64());
            if e.is_nan() || a.is_nan() {
                return e.is_nan() && a.is_nan();
            }
            if e.is_infinite() || a.is_infinite() {
                return e == a;
            }
            (e - a).abs() <= policy.abs_tol + policy.rel_tol * e.abs()
        }
    }
}

/// Flat indices checked for an output of `n` elements under `policy`.
pub fn sampled_positions(n: usize, policy: &ComparePolicy) -> Vec<usize> {
    match policy.sample_count {
        SampleCount::All => (0..n).collect(),
        SampleCount::Count(m) => XorShift64Star::new(policy.sample_seed).sample_distinct(n, m),
    }
}

pub fn compare_outputs(ref_stdout: &str, cand_stdout: &str, shape: OutputShape, policy: &ComparePolicy) -> FunctionalStatus {
    let expected = parse_output(ref_stdout);
    let actual = parse_output(cand_stdout);
    let n = shape.len();

    let span = n.max(expected.len()).max(actual.len());
    let first_bad = (0..span).find(|&i| {
        i >= n
            || !matches!(expected.get(i), Some(Some(_)))
            || !matches!(actual.get(i), Some(Some(_)))
    });
    if let Some(i) = first_bad {
        let value = |v: &[Option<OutputValue>]| v.get(i).copied().flatten().map_or(f64::NAN, OutputValue::as_f64);
        return FunctionalStatus::Fail {
            defects: vec![Defect {
                position: shape.position(i),
                expected: value(&expected),
                actual: value(&actual),
                kind: DefectKind::Shape,
            }],
        };
    }

    let defects: Vec<Defect> = sampled_positions(n, policy)
        .into_iter()
        .filter_map(|i| {
            let (e, a) = (expected[i]?, actual[i]?);
            (!values_match(e, a, policy)).then(|| Defect {
                position: shape.position(i),
                expected: e.as_f64(),
                actual: a.as_f64(),
                kind: DefectKind::Mismatch,
            })
        })
        .collect();
    if defects.is_empty() {
        FunctionalStatus::Pass
    } else {
        FunctionalStatus::Fail { defects }
    }
}
