//! Sequential versus parallel throughput of the data-parallel stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use psdetect::dataset::{build_vocab_on, documents_from_scripts, encode_documents, TokenMode};
use psdetect::nn::{Classifier, ModelConfig};
use psdetect::par::Execution;
use psdetect::pipeline::build_records;
use psdetect::stats::corpus_report;
use psdetect::synth::{generate, GeneratorSpec};
use psdetect::tokenizer::{Stoplist, DEFAULT_CAP, DEFAULT_MAX_LEN};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus_stages(c: &mut Criterion) {
    let scripts = generate(&GeneratorSpec::new(1, 200, 200)).unwrap();
    let bytes: usize = scripts.iter().map(|s| s.text.len()).sum();
    let mut group = c.benchmark_group("corpus");
    group.throughput(Throughput::Bytes(bytes as u64));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("parse_and_linearize", name), &exec, |b, &exec| {
            b.iter(|| build_records(black_box(&scripts), exec))
        });
        group.bench_with_input(BenchmarkId::new("stats", name), &exec, |b, &exec| {
            b.iter(|| corpus_report(black_box(&scripts), exec).unwrap())
        });
    }
    group.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let scripts = generate(&GeneratorSpec::new(2, 16, 16)).unwrap();
    let docs = documents_from_scripts(&scripts, TokenMode::Ast, Execution::Sequential);
    let vocab = build_vocab_on(&docs, None, DEFAULT_CAP, &Stoplist::administration_defaults()).unwrap();
    let batch = encode_documents(&docs, &vocab, DEFAULT_MAX_LEN, Execution::Sequential);
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    group.throughput(Throughput::Elements(batch.len() as u64));
    for bidirectional in [false, true] {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            bidirectional,
            ..ModelConfig::default()
        };
        let model = Classifier::new(config, 3).unwrap();
        let arch = if bidirectional { "bilstm" } else { "lstm" };
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(arch, name), &exec, |b, &exec| {
                b.iter(|| model.gradients(black_box(&batch), Some(7), exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, corpus_stages, batch_gradients);
criterion_main!(benches);
