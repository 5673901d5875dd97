use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hlsgen::dataset::{tag_complexity, ComplexityThresholds};
use hlsgen::func_check::{compare_outputs, ComparePolicy, OutputShape, SampleCount};
use hlsgen::metrics::pass_at_k;
use hlsgen::syntax_check::parse_diagnostics;

const STDERR: &str = "k.c: In function 'main':\n\
k.c:4:5: error: 'undeclared_var' undeclared (first use in this function)\n\
    4 |     undeclared_var = 1;\n\
      |     ^~~~~~~~~~~~~~\n\
k.c:4:5: note: each undeclared identifier is reported only once for each function it appears in\n\
k.c:9:20: error: expected ';' before '}' token\n\
    9 | int f(void){return 0}\n\
      |                    ^\n\
      |                    ;\n\
k.c:12: warning: ignoring '#pragma HLS PIPELINE' [-Wunknown-pragmas]\n";

fn kernel(depth: usize, body_lines: usize) -> String {
    let mut s = String::from("void k(int n, double *a) {\n");
    for d in 0..depth {
        s.push_str(&format!("for (int i{d} = 0; i{d} < n; i{d}++) {{\n"));
    }
    for l in 0..body_lines {
        s.push_str(&format!("  a[{l}] += a[{l}] * 0.5; // step {l}\n"));
    }
    for _ in 0..depth {
        s.push_str("}\n");
    }
    s.push_str("}\n");
    s
}

fn bench_pass_at_k(c: &mut Criterion) {
    c.bench_function("pass_at_k/n200_sweep", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for cnt in 0..=200u64 {
                acc += pass_at_k(black_box(200), cnt, 10).unwrap();
            }
            acc
        })
    });
}

fn bench_diagnostics(c: &mut Criterion) {
    let big = STDERR.repeat(50);
    c.bench_function("parse_diagnostics/small", |b| b.iter(|| parse_diagnostics(black_box(STDERR))));
    c.bench_function("parse_diagnostics/x50", |b| b.iter(|| parse_diagnostics(black_box(&big))));
}

fn bench_compare(c: &mut Criterion) {
    let expected: String = (0..4096).map(|i| format!("{:.17}\n", i as f64 * 0.25)).collect();
    let shape = OutputShape::Matrix { rows: 64, cols: 64 };
    let sampled = ComparePolicy { sample_count: SampleCount::Count(64), ..ComparePolicy::default() };
    let all = ComparePolicy { sample_count: SampleCount::All, ..ComparePolicy::default() };
    c.bench_function("compare_outputs/64x64_sampled", |b| {
        b.iter(|| compare_outputs(black_box(&expected), black_box(&expected), shape, &sampled))
    });
    c.bench_function("compare_outputs/64x64_all", |b| {
        b.iter(|| compare_outputs(black_box(&expected), black_box(&expected), shape, &all))
    });
}

fn bench_complexity(c: &mut Criterion) {
    let small = kernel(2, 10);
    let large = kernel(4, 400);
    let th = ComplexityThresholds::default();
    c.bench_function("tag_complexity/small", |b| b.iter(|| tag_complexity(black_box(&small), &th)));
    c.bench_function("tag_complexity/large", |b| b.iter(|| tag_complexity(black_box(&large), &th)));
}

criterion_group!(benches, bench_pass_at_k, bench_diagnostics, bench_compare, bench_complexity);
criterion_main!(benches);
