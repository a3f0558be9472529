use criterion::{criterion_group, criterion_main, Criterion};
use openvik_bench::{phrases, synthetic_corpus};
use openvik_core::diversify::{enhance, random_drop, score_table, DropConfig, EnhanceConfig, ScoreGrid};
use openvik_core::eval::{bleu, diversity, meteor, rouge_l, DiversityMode};
use openvik_core::generator::{build_mask_prompt, variety_loss, VarietyConfig};
use openvik_core::kg::{overlap_report, parse_triplet};
use openvik_core::mock::{HashEmbedder, MockCommonsense, MockKnowledgeSource};
use openvik_core::region::{build_relational_regions, select_regions, RegionProposal};
use std::hint::black_box;

fn enhancement(c: &mut Criterion) {
    let corpus = synthetic_corpus(200, 5, 1);
    let table = score_table(&corpus, &ScoreGrid::default());
    c.bench_function("score_table/1000", |b| b.iter(|| score_table(black_box(&corpus), &ScoreGrid::default())));
    c.bench_function("random_drop/1000", |b| b.iter(|| random_drop(black_box(&corpus), &table, &DropConfig::default())));
    let (kg, cs) = (MockKnowledgeSource::default(), MockCommonsense::default());
    c.bench_function("enhance/1000", |b| b.iter(|| enhance(black_box(&corpus), &kg, &cs, &EnhanceConfig::default())));
}

fn regions(c: &mut Criterion) {
    let corpus = synthetic_corpus(50, 40, 2);
    let proposals: Vec<RegionProposal> = corpus
        .images()
        .iter()
        .flat_map(build_relational_regions)
        .enumerate()
        .map(|(i, r)| RegionProposal::new(r.bbox, (i % 97) as f64 / 97.0).unwrap())
        .collect();
    c.bench_function("select_regions/2000", |b| b.iter(|| select_regions(black_box(&proposals), 30)));
    let region = proposals[0].bbox;
    c.bench_function("mask_prompt/640x480", |b| b.iter(|| build_mask_prompt(black_box(&region), 640, 480, 16)));
}

fn text(c: &mut Criterion) {
    let texts = phrases(&synthetic_corpus(20, 10, 3));
    let emb = HashEmbedder::default();
    c.bench_function("variety_loss/10", |b| b.iter(|| variety_loss(black_box(&texts[..10]), &emb, &VarietyConfig::default())));
    c.bench_function("diversity/200", |b| b.iter(|| diversity(black_box(&texts), &emb, DiversityMode::Exhaustive)));
    let (cand, refs) = ("a man riding a brown horse on the beach", ["a man rides a horse along the beach", "person on horseback"]);
    c.bench_function("bleu", |b| b.iter(|| bleu(black_box(cand), &refs, 4)));
    c.bench_function("rouge_l", |b| b.iter(|| rouge_l(black_box(cand), refs[0])));
    c.bench_function("meteor", |b| b.iter(|| meteor(black_box(cand), refs[0])));
}

fn knowledge(c: &mut Criterion) {
    let texts = phrases(&synthetic_corpus(40, 5, 4));
    c.bench_function("parse_triplet/200", |b| b.iter(|| texts.iter().filter_map(|t| parse_triplet(black_box(t))).count()));
    let triplets: Vec<_> = texts.iter().filter_map(|t| parse_triplet(t)).map(|p| p.triplet).collect();
    let (a, rest) = triplets.split_at(triplets.len() / 3);
    let (k, l) = rest.split_at(rest.len() / 2);
    let emb = HashEmbedder::default();
    c.bench_function("overlap_report/200", |b| b.iter(|| overlap_report(black_box(a), k, l, &emb, 0.75)));
}

criterion_group!(benches, enhancement, regions, text, knowledge);
criterion_main!(benches);
