//! Dataset parsing, export and split over the shipped fixtures.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use hlsgen::dataset::{
    export_training_jsonl, parse_jsonl, split, validate, Category, Complexity, DatasetManifest, DesignPoint, Pragma,
    PromptVariant, SplitRole,
};
use proptest::prelude::*;

fn demo() -> Vec<u8> {
    fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo.jsonl")).unwrap()
}

#[test]
fn demo_dataset_parses_and_validates() {
    let parsed = parse_jsonl(&demo()).unwrap();
    assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
    assert_eq!(parsed.manifest.len(), 7);
    assert!(validate(&parsed.manifest, SplitRole::Test).is_clean());
    // pragmas and complexity are derived for every point
    let fields: BTreeSet<&str> = parsed.defaults_applied.iter().map(|d| d.field).collect();
    assert!(fields.contains("complexity"), "{fields:?}");
    assert_eq!(parsed.defaults_applied.len(), 14);
    let vadd = parsed.manifest.get("vadd").unwrap();
    assert!(vadd.pragmas.contains(&Pragma::Pipeline));
}

#[test]
fn export_then_parse_is_identity_on_demo() {
    let first = parse_jsonl(&demo()).unwrap().manifest;
    let mut buf = Vec::new();
    let n = export_training_jsonl(&first, &mut buf).unwrap();
    assert_eq!(n as usize, buf.len());
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), first.len());
    let again = parse_jsonl(&buf).unwrap();
    assert!(again.errors.is_empty());
    assert!(again.defaults_applied.is_empty(), "exported records carry every field");
    assert_eq!(again.manifest.points, first.points);
}

#[test]
fn truncated_line_is_reported_by_number() {
    let good = |id: &str| {
        format!(r#"{{"id":"{id}","instruction":"Generate HLS code with the following instructions:","input":"d","output":"void {id}(void) {{}}","source_file":"{id}.c"}}"#)
    };
    let text = format!("{}\n{}\n{}\n{{\"id\":\"x\",\"instr", good("a"), good("b"), good("c"));
    let parsed = parse_jsonl(text.as_bytes()).unwrap();
    assert_eq!(parsed.manifest.len(), 3);
    assert_eq!(parsed.errors.len(), 1);
    assert_eq!(parsed.errors[0].line, 4);
}

#[test]
fn non_utf8_is_fatal() {
    assert!(parse_jsonl(&[0xff, 0xfe, b'\n']).is_err());
}

fn synthetic(n: usize) -> DatasetManifest {
    DatasetManifest::new(
        (0..n)
            .map(|i| DesignPoint {
                id: format!("design_{i:02}"),
                instruction: "Generate HLS code with the following instructions:".into(),
                description: format!("design number {i}"),
                reference_source: format!("void design_{i:02}(int a[4]) {{ a[0] = {i}; }}\n"),
                source_file: format!("design_{i:02}.c"),
                category: Category::OtherKernel,
                pragmas: BTreeSet::new(),
                complexity: Complexity::Easy,
                prompt_variant: PromptVariant::MachineGen,
            })
            .collect(),
    )
}

#[test]
fn fifty_two_points_split_forty_two_ten() {
    let m = synthetic(52);
    for seed in [0, 1, 42, u64::MAX] {
        let (train, test) = split(&m, 4, 1, seed).unwrap();
        assert_eq!((train.len(), test.len()), (42, 10));
        let (train2, test2) = split(&m, 4, 1, seed).unwrap();
        assert_eq!((train.points, test.points), (train2.points, test2.points));
    }
    let (_, a) = split(&m, 4, 1, 1).unwrap();
    let (_, b) = split(&m, 4, 1, 2).unwrap();
    assert_ne!(a.points, b.points, "different seeds should shuffle differently");
}

proptest! {
    #[test]
    fn split_partitions_the_input(n in 1usize..80, train in 1usize..6, test in 1usize..6, seed in any::<u64>()) {
        let m = synthetic(n);
        let (tr, te) = split(&m, train, test, seed).unwrap();
        prop_assert_eq!(te.len(), n * test / (train + test));
        prop_assert_eq!(tr.len() + te.len(), n);
        let ids: BTreeSet<_> = tr.points.iter().chain(&te.points).map(|p| p.id.clone()).collect();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn export_round_trips_arbitrary_text(desc in "\\PC{0,60}", src in "[ -~\n\t]{1,80}", human in any::<bool>()) {
        let mut m = synthetic(1);
        m.points[0].description = desc;
        m.points[0].reference_source = src;
        m.points[0].prompt_variant = if human { PromptVariant::HumanRefine } else { PromptVariant::MachineGen };
        let mut buf = Vec::new();
        export_training_jsonl(&m, &mut buf).unwrap();
        let back = parse_jsonl(&buf).unwrap();
        prop_assert!(back.errors.is_empty());
        prop_assert_eq!(back.manifest.points, m.points);
    }
}
