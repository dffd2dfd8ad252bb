use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mtcascade::calibration::{fit_quantile_threshold, select_jdm_samples, JdmSelection, PolicyThresholds, QuantileDirection};
use mtcascade::decider::{train_linear_decider, Decider, DecisionContext, Policy, TrainOptions};
use mtcascade::ngram::{train_lm, TrainConfig};
use mtcascade::scoring::chrf::chrf;
use mtcascade::scoring::qe::qe_score;
use mtcascade::synth::{synth_corpus, synth_pair, synth_records, SynthConfig};

fn scoring(c: &mut Criterion) {
    let records = synth_records(&SynthConfig::new(200, 1));
    let pair = synth_pair();
    c.bench_function("chrf/200 sentences", |b| {
        b.iter(|| {
            for r in &records {
                black_box(chrf(r.nmt_hyp.as_deref().unwrap(), r.reference.as_deref().unwrap()));
            }
        })
    });
    c.bench_function("qe/200 sentences", |b| {
        b.iter(|| {
            for r in &records {
                black_box(qe_score(&r.segment.text, r.nmt_hyp.as_deref().unwrap(), Some(&pair)));
            }
        })
    });
}

fn perplexity(c: &mut Criterion) {
    let lm = train_lm(&synth_corpus(5000, 2, 0.2), &TrainConfig::default()).unwrap();
    let probes = synth_corpus(200, 3, 0.2);
    c.bench_function("perplexity/200 sentences", |b| {
        b.iter(|| {
            for s in &probes {
                black_box(lm.perplexity(s).unwrap());
            }
        })
    });
}

fn quantile(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantile fit");
    for n in [1_000usize, 100_000] {
        let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| fit_quantile_threshold(black_box(s), 0.25, QuantileDirection::LowestFraction).unwrap())
        });
    }
    group.finish();
}

fn decide(c: &mut Criterion) {
    let lm = std::sync::Arc::new(train_lm(&synth_corpus(5000, 4, 0.2), &TrainConfig::default()).unwrap());
    let records = synth_records(&SynthConfig {
        hard_fraction: 0.2,
        ..SynthConfig::new(3000, 5)
    });
    let set = select_jdm_samples(
        &records,
        &JdmSelection {
            n_pos: 100,
            ..JdmSelection::default()
        },
    )
    .unwrap();
    let clf = train_linear_decider(&set, lm.as_ref(), &TrainOptions::default()).unwrap();
    let mut t = PolicyThresholds::new(synth_pair(), 0.25);
    t.pplt_threshold = Some(50.0);
    let pplt = Decider::from_parts(Policy::Pplt, t.clone(), 0.5, Some(lm.clone()), None).unwrap();
    let jdm = Decider::from_parts(Policy::Jdm, t, 0.5, Some(lm), Some(clf)).unwrap();
    let seg = &records[0].segment;
    let ctx = DecisionContext::default();
    c.bench_function("decide/pplt", |b| b.iter(|| pplt.decide(black_box(seg), &ctx).unwrap()));
    c.bench_function("decide/jdm", |b| b.iter(|| jdm.decide(black_box(seg), &ctx).unwrap()));
}

criterion_group!(benches, scoring, perplexity, quantile, decide);
criterion_main!(benches);
