use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use neurotrack::classify::{nested_cv, shapley_values, svm_train, wilcoxon_rank_sum, CvConfig, TrackingProfile};
use neurotrack::dsp::{apply_fir_compensated, design_fir, extract_envelope, BandDef, BandName, EnvelopeConfig};
use neurotrack::nn::{Architecture, ExampleView, MatchMismatchModel, ModelConfig};
use neurotrack_bench::{noise, profiles};
use rand::SeedableRng;

fn dsp(c: &mut Criterion) {
    let theta = BandDef::canonical(BandName::Theta);
    c.bench_function("design_fir theta 512 Hz order 2000", |b| b.iter(|| design_fir(black_box(&theta), 512.0, 2000)));

    let f = design_fir(&theta, 64.0, 250).unwrap();
    let eeg = noise(64, 64 * 60, 64.0, 1);
    c.bench_function("fir 64 channels x 60 s at 64 Hz", |b| b.iter(|| apply_fir_compensated(black_box(&eeg), &f)));

    let audio = noise(1, 16384 * 10, 16384.0, 2);
    let broad = BandDef::canonical(BandName::Broad);
    let mut g = c.benchmark_group("envelope");
    g.sample_size(10);
    g.bench_function("gammatone 10 s at 16384 Hz", |b| {
        b.iter(|| extract_envelope(black_box(&audio), &broad, &EnvelopeConfig::default()))
    });
    g.finish();
}

fn nn(c: &mut Criterion) {
    let mut rng = neurotrack::rng::Rng::seed_from_u64(3);
    let model = MatchMismatchModel::init(ModelConfig::new(Architecture::SingleFeature), &mut rng).unwrap();
    let t = 320;
    let eeg = noise(64, t, 64.0, 4);
    let stim = noise(2, t, 64.0, 5);
    let view = ExampleView { eeg: eeg.data(), first: stim.channel(0), second: stim.channel(1), t };
    c.bench_function("match-mismatch forward 5 s", |b| b.iter(|| model.forward(black_box(&view)).unwrap()));
    let pass = model.forward(&view).unwrap();
    let mut grads = vec![0.0; model.n_params()];
    c.bench_function("match-mismatch backward 5 s", |b| {
        b.iter(|| model.backward(black_box(&pass), &[(false, 1.0), (true, 0.0)], 1.0, &mut grads, false))
    });
}

fn classify(c: &mut Criterion) {
    let p = profiles(22, 26, 0.05, 6);
    let x: Vec<Vec<f64>> = p.iter().map(TrackingProfile::feature_vector).collect();
    let y: Vec<bool> = p.iter().map(TrackingProfile::is_patient).collect();
    c.bench_function("svm_train 48 x 12", |b| b.iter(|| svm_train(black_box(&x), &y, 1.0, 1.0 / 12.0)));
    let m = svm_train(&x, &y, 1.0, 1.0 / 12.0).unwrap();
    c.bench_function("exact shapley 12 features, 48 background", |b| {
        b.iter(|| shapley_values(&m, black_box(&x[0]), &x))
    });
    let (a, bb): (Vec<f64>, Vec<f64>) = (x[..22].iter().map(|r| r[0]).collect(), x[22..].iter().map(|r| r[0]).collect());
    c.bench_function("wilcoxon 22 vs 26", |b| b.iter(|| wilcoxon_rank_sum(black_box(&a), &bb)));
    let mut g = c.benchmark_group("cv");
    g.sample_size(10);
    g.bench_function("nested LOSO 48 subjects", |b| b.iter(|| nested_cv(black_box(&p), &CvConfig::default())));
    g.finish();
}

criterion_group!(benches, dsp, nn, classify);
criterion_main!(benches);
