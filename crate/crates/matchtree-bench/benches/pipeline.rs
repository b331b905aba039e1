//! End-to-end stage benchmarks: synthesis, cutting, evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use matchtree::dendro::cut_k;
use matchtree::evaluate::purity;
use matchtree::linkage::cluster;
use matchtree::meta::LabelField;
use matchtree::synth::{generate, SynthConfig};
use matchtree::LinkageMethod;

fn config(n_subjects: usize) -> SynthConfig {
    SynthConfig {
        n_subjects,
        images_per_subject: (8, 8),
        seed: 7,
        ..SynthConfig::default()
    }
}

fn bench_generate(c: &mut Criterion) {
    let mut group = c.benchmark_group("synth_generate");
    for &subjects in &[25usize, 50, 100] {
        group.bench_with_input(
            BenchmarkId::from_parameter(subjects),
            &config(subjects),
            |b, cfg| b.iter(|| generate(cfg).unwrap()),
        );
    }
    group.finish();
}

fn bench_cut_and_eval(c: &mut Criterion) {
    let cfg = config(50);
    let (scores, meta) = generate(&cfg).unwrap();
    let tree = cluster(scores.to_distance(), LinkageMethod::Ward);

    c.bench_function("cut_k/400_leaves", |b| b.iter(|| cut_k(&tree, 50).unwrap()));

    let partition = cut_k(&tree, 50).unwrap();
    c.bench_function("purity/400_images", |b| {
        b.iter(|| purity(&partition, &meta, LabelField::Subject).unwrap())
    });
}

criterion_group!(benches, bench_generate, bench_cut_and_eval);
criterion_main!(benches);
