use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use spn_bench::random_utterance;
use spn_core::model::{joint_loss, LossWeights, Reduction, SpnConfig, SpnModel};
use spn_core::nn::{AttentionStack, Blstm, ConvBank, ParamStore, Partition, Session, TrainableSet};
use spn_core::rng::{seeded, uniform_tensor};
use spn_core::Tape;

const P: Partition = Partition::SpeechStream;

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [64, 256] {
        let a = uniform_tensor(&mut seeded(0), &[n, n], -1.0, 1.0);
        let b = uniform_tensor(&mut seeded(1), &[n, n], -1.0, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut t = Tape::new();
                let (x, y) = (t.leaf(a.clone(), true), t.leaf(b.clone(), true));
                let z = t.matmul(x, y).unwrap();
                let s = t.sum(z);
                black_box(t.backward(s).unwrap());
            })
        });
    }
    g.finish();
}

fn layers(c: &mut Criterion) {
    let frames = 140;
    let mut g = c.benchmark_group("layer_forward_backward");

    let mut store = ParamStore::new();
    let bank = ConvBank::new(&mut store, "bank", P, 39, 64, &[1, 3, 5, 7, 9], 0).unwrap();
    let x = uniform_tensor(&mut seeded(2), &[frames, 39], -1.0, 1.0);
    g.bench_function("conv_bank_39x320", |b| {
        b.iter(|| {
            let mut s = Session::new(&store, TrainableSet::all());
            let xv = s.input(x.clone());
            let y = bank.forward(&mut s, xv).unwrap();
            let l = s.tape.sum(y);
            black_box(s.backward(l).unwrap());
        })
    });

    let mut store = ParamStore::new();
    let stack = AttentionStack::new(&mut store, "attn", P, 1, 512, 8, 64, 64, 0).unwrap();
    let x = uniform_tensor(&mut seeded(3), &[frames, 512], -1.0, 1.0);
    g.bench_function("attention_layer_512x8", |b| {
        b.iter(|| {
            let mut s = Session::new(&store, TrainableSet::all());
            let xv = s.input(x.clone());
            let y = stack.forward(&mut s, xv).unwrap().output;
            let l = s.tape.sum(y);
            black_box(s.backward(l).unwrap());
        })
    });

    let mut store = ParamStore::new();
    let blstm = Blstm::new(&mut store, "blstm", P, 300, 150, 0);
    let x = uniform_tensor(&mut seeded(4), &[frames, 300], -1.0, 1.0);
    g.bench_function("blstm_300x150", |b| {
        b.iter(|| {
            let mut s = Session::new(&store, TrainableSet::all());
            let xv = s.input(x.clone());
            let y = blstm.forward(&mut s, xv).unwrap();
            let l = s.tape.sum(y);
            black_box(s.backward(l).unwrap());
        })
    });
    g.finish();
}

fn full_model(c: &mut Criterion) {
    let sample = random_utterance(140, 5);
    let mut g = c.benchmark_group("spn_utterance_140_frames");
    g.sample_size(10);
    for (name, config) in [("desk", SpnConfig::desk()), ("full", SpnConfig::default())] {
        let model = SpnModel::new(config, 0).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut s = Session::new(model.store(), TrainableSet::all());
                let m = s.input(sample.features.clone());
                let p = s.input(sample.phonemes.clone());
                let y = s.input(sample.ema.clone());
                let out = model.forward(&mut s, m, Some(p)).unwrap();
                let l = joint_loss(
                    &mut s.tape,
                    Some(out.spn_pred),
                    out.phoneme_pred,
                    y,
                    LossWeights::default(),
                    Reduction::FrameMean,
                )
                .unwrap();
                black_box(s.backward(l).unwrap());
            })
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, layers, full_model);
criterion_main!(benches);
