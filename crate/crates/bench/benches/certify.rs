use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bnncert_core::{
    collect_outputs, cvar_alpha, dro_sup_concave, fit_support, make_template, perf_samples, synth_model,
    Activation, AmbiguityBall, BnnModel, BoxRadius, EmpiricalDistribution, InputDistribution, OutputSamples,
    PerfFn, TemplateKind,
};

fn model() -> BnnModel {
    synth_model(&[4, 16, 16, 2], Activation::Tanh, 0.6, 0.05, 1).unwrap()
}

fn input() -> InputDistribution {
    InputDistribution::UniformBox {
        center: vec![0.0; 4],
        radius: BoxRadius::Scalar(0.5),
    }
}

fn outputs(n: usize) -> OutputSamples {
    collect_outputs(&model(), &input(), n, 7).unwrap()
}

fn bench_sampling(c: &mut Criterion) {
    let (m, d) = (model(), input());
    let mut g = c.benchmark_group("collect_outputs");
    for n in [1_000, 10_000] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| collect_outputs(&m, &d, n, black_box(3)).unwrap())
        });
    }
    g.finish();
}

fn bench_fit(c: &mut Criterion) {
    let samples = outputs(20_000);
    let mut g = c.benchmark_group("fit_support");
    for (name, kind) in [("box", TemplateKind::Box), ("octagon", TemplateKind::Octagon)] {
        let t = make_template(kind, 2).unwrap();
        g.bench_function(name, |b| b.iter(|| fit_support(&t, black_box(&samples), 0.05, 0.05).unwrap()));
    }
    g.finish();
}

fn bench_cvar(c: &mut Criterion) {
    let h = PerfFn::Affine { a: vec![1.0, -0.5], b: 0.0 };
    let values = perf_samples(&outputs(100_000), &h).unwrap();
    c.bench_function("cvar_alpha/100000", |b| b.iter(|| cvar_alpha(black_box(&values), 0.1).unwrap()));
}

fn bench_dro(c: &mut Criterion) {
    let samples = outputs(400);
    let t = make_template(TemplateKind::Octagon, 2).unwrap();
    let fs = fit_support(&t, &samples, 0.05, 0.05).unwrap();
    let rows: Vec<Vec<f64>> = samples.rows().map(<[f64]>::to_vec).collect();
    let center = EmpiricalDistribution::from_rows(&rows).unwrap();
    let ball = AmbiguityBall::new(center, 0.05, Some(fs)).unwrap();
    let mut g = c.benchmark_group("dro_sup_concave");
    g.sample_size(10);
    for (name, h) in [
        ("affine", PerfFn::Affine { a: vec![1.0, -0.5], b: 0.0 }),
        ("neg_margin", PerfFn::Negated { inner: Box::new(PerfFn::Margin { true_class: 0, classes: 2 }) }),
    ] {
        g.bench_function(name, |b| b.iter(|| dro_sup_concave(&h, black_box(&ball)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench_sampling, bench_fit, bench_cvar, bench_dro);
criterion_main!(benches);
