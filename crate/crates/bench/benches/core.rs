use std::hint::black_box;

use blanc_bench::{example, model, random_distribution};
use blanc_core::block_attention::{context_loss, membership_probabilities};
use blanc_core::model::ContextReduction;
use blanc_core::{generate_soft_labels, AnswerSpan, SoftLabelConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn soft_labels(c: &mut Criterion) {
    let mut g = c.benchmark_group("soft_labels");
    for length in [64, 384] {
        let span = AnswerSpan { start: length / 2, end: length / 2 + 3 };
        for cfg in [SoftLabelConfig::SHORT_PASSAGE, SoftLabelConfig::LONG_PASSAGE] {
            let id = BenchmarkId::new(format!("q{}_w{}", cfg.q, cfg.window), length);
            g.bench_with_input(id, &length, |b, &l| b.iter(|| generate_soft_labels(black_box(l), span, cfg).unwrap()));
        }
    }
    g.finish();
}

fn block_attention(c: &mut Criterion) {
    let mut g = c.benchmark_group("block_attention");
    for length in [64, 384] {
        let ps = random_distribution(length, 1);
        let pe = random_distribution(length, 2);
        let labels = generate_soft_labels(length, AnswerSpan { start: 10, end: 12 }, SoftLabelConfig::SHORT_PASSAGE).unwrap().values;
        g.bench_with_input(BenchmarkId::new("membership", length), &length, |b, _| {
            b.iter(|| membership_probabilities(black_box(&ps), black_box(&pe)).unwrap())
        });
        let m = membership_probabilities(&ps, &pe).unwrap().membership;
        g.bench_with_input(BenchmarkId::new("context_loss", length), &length, |b, _| {
            b.iter(|| context_loss(black_box(&m), &labels).unwrap())
        });
    }
    g.finish();
}

fn model_passes(c: &mut Criterion) {
    let mut g = c.benchmark_group("model");
    g.sample_size(20);
    for (hidden, layers, length) in [(32, 2, 64), (64, 2, 128)] {
        let m = model(hidden, layers, length);
        let ex = example(length);
        let id = format!("d{hidden}_l{layers}");
        g.bench_with_input(BenchmarkId::new(format!("forward/{id}"), length), &ex, |b, ex| b.iter(|| m.forward(ex).unwrap()));
        g.bench_with_input(BenchmarkId::new(format!("forward_backward/{id}"), length), &ex, |b, ex| {
            b.iter(|| m.loss_and_grads(ex, 0.8, ContextReduction::Sum, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, soft_labels, block_attention, model_passes);
criterion_main!(benches);
