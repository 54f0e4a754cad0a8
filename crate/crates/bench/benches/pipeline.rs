use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gsfit::benchmark::{run_case, CaseSpec};
use gsfit::detect::{detect_structure, tabulate, Slice};
use gsfit::fit::fit_factor;
use gsfit::{DetectConfig, DomainBox, Expr, OptimizerConfig, Oracle};
use gsfit::expr::Program;

fn eval(c: &mut Criterion) {
    let spec = CaseSpec::get(10).unwrap();
    let program: Program = spec.expr().compile();
    let points = spec.domain().sample_points(1000, 0);
    c.bench_function("eval/case10_x1000", |b| {
        b.iter(|| points.iter().map(|p| program.eval(black_box(p), &[])).sum::<f64>())
    });
}

fn detect(c: &mut Criterion) {
    let mut g = c.benchmark_group("detect");
    for no in [4, 8, 10] {
        let o = CaseSpec::get(no).unwrap().oracle();
        g.bench_with_input(BenchmarkId::from_parameter(no), &o, |b, o| {
            b.iter(|| detect_structure(o, &DetectConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn factor(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_factor");
    for (k, text) in [(1, "sin(2*x1)"), (1, "0.5*exp(1.2*x1)"), (2, "sin(x1*x2)")] {
        let o = Oracle::new(Expr::parse(text, k).unwrap(), DomainBox::cube(k, -3.0, 3.0).unwrap()).unwrap();
        let slice = Slice::psi(&o, (0..k).collect(), &vec![0.37; k]);
        let data = tabulate(&o, &slice, 40, 1e-8, 0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(text), &data, |b, d| {
            b.iter(|| fit_factor(d, &OptimizerConfig::default(), 12))
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_case");
    g.sample_size(10);
    for no in [1, 5, 9] {
        g.bench_with_input(BenchmarkId::from_parameter(no), &no, |b, &no| b.iter(|| run_case(no, 0)));
    }
    g.finish();
}

criterion_group!(benches, eval, detect, factor, pipeline);
criterion_main!(benches);
