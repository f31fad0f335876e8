use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use sktkit::conllu::{read_conllu, write_conllu, ConlluOptions};
use sktkit::deplin::{delinearize, linearize, DepSampleConfig};
use sktkit::metrics::{cer_wer, levenshtein};
use sktkit::sandhi::RuleTable;
use sktkit::taskgen::{build_paragraphs, generate_samples, TaskSpec};
use sktkit_bench::fixture;

fn sandhi(c: &mut Criterion) {
    let f = fixture(1);
    let rules = RuleTable::builtin();
    let mut g = c.benchmark_group("sandhi");
    g.throughput(Throughput::Elements(f.junctions.len() as u64));
    g.bench_function("synth", |b| {
        b.iter(|| {
            for (_, _, l, r) in &f.junctions {
                black_box(rules.synth(l, r));
            }
        })
    });
    g.bench_function("analyze_junction", |b| {
        b.iter(|| {
            for (m, p, _, _) in &f.junctions {
                black_box(rules.analyze_junction(m, *p));
            }
        })
    });
    g.finish();
}

fn codec(c: &mut Criterion) {
    let f = fixture(4);
    let tags: Vec<String> = f.corpus.iter().flat_map(|s| s.tokens.iter().map(|t| t.morph.canonical())).collect();
    let codes: Vec<&str> = tags.iter().map(|t| f.codebook.encode_str(t).unwrap()).collect();
    let mut g = c.benchmark_group("tagcodec");
    g.throughput(Throughput::Elements(tags.len() as u64));
    g.bench_function("encode", |b| b.iter(|| tags.iter().map(|t| f.codebook.encode_str(t).unwrap().len()).sum::<usize>()));
    g.bench_function("decode", |b| b.iter(|| codes.iter().map(|c| f.codebook.decode(c).unwrap().len()).sum::<usize>()));
    g.finish();
}

fn taskgen(c: &mut Criterion) {
    let f = fixture(4);
    let slm = TaskSpec::new("SLM".parse().unwrap());
    let mut g = c.benchmark_group("taskgen");
    g.throughput(Throughput::Elements(f.corpus.len() as u64));
    g.sample_size(20);
    g.bench_function("slm_samples", |b| b.iter(|| generate_samples(&f.corpus, &slm, 512, Some(&f.codebook), None, 1).unwrap()));
    g.bench_function("slm_samples_checked", |b| {
        b.iter(|| generate_samples(&f.corpus, &slm, 512, Some(&f.codebook), Some(RuleTable::builtin()), 1).unwrap())
    });
    g.bench_function("paragraphs", |b| b.iter(|| build_paragraphs(&f.corpus, 512).len()));
    g.finish();
}

fn conllu(c: &mut Criterion) {
    let f = fixture(4);
    let opts = ConlluOptions::default();
    let mut text = Vec::new();
    write_conllu(&mut text, &f.corpus, &opts).unwrap();
    let mut g = c.benchmark_group("conllu");
    g.throughput(Throughput::Bytes(text.len() as u64));
    g.sample_size(20);
    g.bench_function("read", |b| b.iter(|| read_conllu(&text[..], &opts).unwrap().0.len()));
    g.finish();
}

fn deplin(c: &mut Criterion) {
    let f = fixture(2);
    let cfg = DepSampleConfig::default();
    let pairs: Vec<(String, String)> = f.corpus.iter().map(|s| linearize(s, &cfg).unwrap()).collect();
    let mut g = c.benchmark_group("deplin");
    g.throughput(Throughput::Elements(pairs.len() as u64));
    g.bench_function("linearize", |b| b.iter(|| f.corpus.iter().map(|s| linearize(s, &cfg).unwrap().1.len()).sum::<usize>()));
    g.bench_function("delinearize", |b| b.iter(|| pairs.iter().map(|(s, t)| delinearize(s, t, &cfg).1.total()).sum::<usize>()));
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let f = fixture(1);
    let gold: Vec<&str> = f.corpus.iter().take(500).map(|s| s.raw_text.as_str()).collect();
    let pred: Vec<String> = gold.iter().map(|s| s.replacen('a', "ā", 2)).collect();
    let pred: Vec<&str> = pred.iter().map(String::as_str).collect();
    let a: Vec<char> = "yuvorhi mātāditiḥ ".repeat(30).chars().collect();
    let mut g = c.benchmark_group("metrics");
    g.bench_function("levenshtein_540_chars", |b| {
        b.iter_batched(|| a.iter().rev().copied().collect::<Vec<char>>(), |bb| levenshtein(&a, &bb), BatchSize::SmallInput)
    });
    g.throughput(Throughput::Elements(gold.len() as u64));
    g.bench_function("cer_wer", |b| b.iter(|| cer_wer(&pred, &gold).unwrap().0.value));
    g.finish();
}

criterion_group!(benches, sandhi, codec, taskgen, conllu, deplin, metrics);
criterion_main!(benches);
