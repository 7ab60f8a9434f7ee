use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::autodiff::{Tape, Tensor};
use crate::data::{synthesize, Checkpoint, SyntheticSpec, UtteranceSample};
use crate::error::Error;
use crate::nn::{param_grad_check_with, Coord, Stencil, Partition, Session, TrainableSet};
use crate::rng::{seeded, uniform_tensor};

/// Same topology, very small widths.
fn tiny() -> SpnConfig {
    SpnConfig {
        conv_channels: 2,
        model_dim: 8,
        heads: 2,
        key_dim: 4,
        attention_layers: 2,
        speech_dense: 6,
        phoneme_hidden: 3,
        phoneme_dense: 5,
        fusion_hidden: 3,
        fusion_dense: 5,
        inversion_hidden: 3,
        ..SpnConfig::default()
    }
}

fn one_hot_rows(frames: usize, seed: u64) -> Tensor {
    let mut r = seeded(seed);
    let mut t = Tensor::zeros([frames, 39]);
    for i in 0..frames {
        let k = r.gen_range(0..39);
        t.data_mut()[i * 39 + k] = 1.0;
    }
    t
}

fn random_sample(id: &str, frames: usize, seed: u64) -> UtteranceSample {
    let mut r = seeded(seed);
    UtteranceSample::new(
        id,
        "spk",
        uniform_tensor(&mut r, &[frames, 39], -1.0, 1.0),
        one_hot_rows(frames, seed + 1),
        uniform_tensor(&mut r, &[frames, 12], -5.0, 5.0),
    )
    .unwrap()
}

fn synthetic(count: usize, seed: u64) -> Vec<UtteranceSample> {
    let mut spec = SyntheticSpec::new(1, count, seed);
    spec.phonemes_per_utterance = (2, 3);
    spec.duration_frames = (3, 5);
    spec.silence_frames = (1, 2);
    synthesize(&spec)
        .unwrap()
        .iter()
        .map(|u| u.to_sample().unwrap())
        .collect()
}

fn quick(seed: u64, epochs: usize) -> TrainConfig {
    let mut h = TrainConfig::new(seed);
    h.epochs = epochs;
    h.adam.learning_rate = 1e-2;
    h
}

#[test]
fn forward_shapes() {
    let model = SpnModel::new(tiny(), 0).unwrap();
    let mut s = Session::new(model.store(), TrainableSet::none());
    let m = s.input(uniform_tensor(&mut seeded(1), &[50, 39], -1.0, 1.0));
    let p = s.input(one_hot_rows(50, 2));
    let out = model.forward(&mut s, m, Some(p)).unwrap();
    assert_eq!(s.tape.shape(out.spn_pred), &[50, 12]);
    assert_eq!(s.tape.shape(out.phoneme_pred.unwrap()), &[50, 12]);
    assert_eq!(out.attention.len(), 2);
    assert!(s.value(out.spn_pred).is_finite());
}

#[test]
fn full_config_builds_and_runs() {
    let cfg = SpnConfig::default();
    let model = SpnModel::new(cfg, 0).unwrap();
    let conv: usize = model.speech.conv_bank.out_dim();
    assert_eq!(conv, 320);
    assert_eq!(model.speech.dense1.in_dim, 832);
    assert_eq!(model.inversion.blstm.forward_dir.input_dim, 312);
    let sample = random_sample("u", 4, 3);
    let pred = model.predict(&sample.features, &sample.phonemes).unwrap();
    assert_eq!(pred.spn.unwrap().shape(), &[4, 12]);
    assert_eq!(pred.phoneme.unwrap().shape(), &[4, 12]);
}

#[test]
fn zero_parameters_give_zero_outputs() {
    let mut model = SpnModel::new(tiny(), 0).unwrap();
    model.store_mut().fill(0.0);
    let sample = random_sample("u", 7, 4);
    let pred = model.predict(&sample.features, &sample.phonemes).unwrap();
    assert!(pred.spn.unwrap().data().iter().all(|&v| v == 0.0));
    assert!(pred.phoneme.unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn stream_length_mismatch_is_an_error() {
    let model = SpnModel::new(tiny(), 0).unwrap();
    let mut s = Session::new(model.store(), TrainableSet::none());
    let m = s.input(Tensor::zeros([5, 39]));
    let p = s.input(Tensor::zeros([6, 39]));
    let err = model.forward(&mut s, m, Some(p)).err().unwrap();
    assert!(err.to_string().contains("frames"), "{err}");
    let bad = s.input(Tensor::zeros([5, 20]));
    assert!(model.forward(&mut s, bad, Some(p)).is_err());
}

#[test]
fn ablated_model_has_no_phoneme_parameters() {
    let model = SpnModel::new(tiny().without_phoneme_stream(), 0).unwrap();
    assert_eq!(model.store().count(Some(Partition::PhonemeStream)), 0);
    assert_eq!(model.inversion.blstm.forward_dir.input_dim, 5);
    let sample = random_sample("u", 6, 5);
    let pred = model.predict(&sample.features, &sample.phonemes).unwrap();
    assert!(pred.phoneme.is_none());
    assert!(ScenarioPlan::for_model(ScenarioId::S1, &model).is_err());
    assert!(ScenarioPlan::for_model(ScenarioId::S2, &model).is_err());
    let plan = ScenarioPlan::for_model(ScenarioId::S3, &model).unwrap();
    assert!(!plan.phoneme_term && !plan.trainable.contains(Partition::PhonemeStream));
}

fn loss_of(spn: &Tensor, ph: &Tensor, y: &Tensor, w: LossWeights, r: Reduction) -> f64 {
    let mut t = Tape::new();
    let (a, b, c) = (t.constant(spn.clone()), t.constant(ph.clone()), t.constant(y.clone()));
    let l = joint_loss(&mut t, Some(a), Some(b), c, w, r).unwrap();
    t.value(l).item()
}

/// Direct double loop over frames and channels.
fn loss_oracle(spn: &Tensor, ph: &Tensor, y: &Tensor, w: LossWeights) -> f64 {
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            a += (spn.at(i, j) - y.at(i, j)).powi(2);
            b += (ph.at(i, j) - y.at(i, j)).powi(2);
        }
    }
    w.spn * a + w.phoneme * b
}

#[test]
fn joint_loss_examples() {
    let y = uniform_tensor(&mut seeded(0), &[2, 12], -3.0, 3.0);
    let w = LossWeights::default();
    assert_eq!(loss_of(&y, &y, &y, w, Reduction::Sum), 0.0);
    let off: Vec<f64> = y.data().iter().map(|v| v + 1.0).collect();
    let off = Tensor::new([2, 12], off).unwrap();
    let l = loss_of(&off, &y, &y, w, Reduction::Sum);
    assert!((l - loss_oracle(&off, &y, &y, w)).abs() < 1e-12);
    assert!((l - 24.0).abs() < 1e-9);
    assert!((loss_of(&off, &y, &y, w, Reduction::FrameMean) - 12.0).abs() < 1e-9);
}

#[test]
fn joint_loss_weighting() {
    let mut r = seeded(9);
    let y = uniform_tensor(&mut r, &[5, 12], -1.0, 1.0);
    let a = uniform_tensor(&mut r, &[5, 12], -1.0, 1.0);
    let b = uniform_tensor(&mut r, &[5, 12], -1.0, 1.0);
    let w = LossWeights { spn: 0.7, phoneme: 2.5 };
    assert!((loss_of(&a, &b, &y, w, Reduction::Sum) - loss_oracle(&a, &b, &y, w)).abs() < 1e-12);
    let only = LossWeights { spn: 1.0, phoneme: 0.0 };
    let mut t = Tape::new();
    let (av, yv) = (t.constant(a.clone()), t.constant(y.clone()));
    let single = joint_loss(&mut t, Some(av), None, yv, LossWeights::default(), Reduction::Sum).unwrap();
    assert_eq!(loss_of(&a, &b, &y, only, Reduction::Sum), t.value(single).item());

    let neg = LossWeights { spn: -1.0, phoneme: 1.0 };
    let bv = t.constant(b.clone());
    assert!(joint_loss(&mut t, Some(av), Some(bv), yv, neg, Reduction::Sum).is_err());
    let short = t.constant(Tensor::zeros([4, 12]));
    assert!(matches!(
        joint_loss(&mut t, Some(short), None, yv, LossWeights::default(), Reduction::Sum),
        Err(Error::Shape { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_loss_non_negative_and_zero_only_at_target(
        y in prop::collection::vec(-5.0f64..5.0, 24),
        d in prop::collection::vec(-1.0f64..1.0, 24),
        e in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let t = |v: Vec<f64>| Tensor::new([2, 12], v).unwrap();
        let yt = t(y.clone());
        let a = t(y.iter().zip(&d).map(|(a, b)| a + b).collect());
        let b = t(y.iter().zip(&e).map(|(a, b)| a + b).collect());
        let l = loss_of(&a, &b, &yt, LossWeights::default(), Reduction::Sum);
        prop_assert!(l >= 0.0);
        let moved = d.iter().chain(&e).any(|&v| v != 0.0);
        prop_assert_eq!(l == 0.0, !moved);
    }

    #[test]
    fn forward_is_finite(seed in 0u64..1000, frames in 1usize..8) {
        let model = SpnModel::new(tiny(), seed).unwrap();
        let s = random_sample("u", frames, seed);
        let p = model.predict(&s.features, &s.phonemes).unwrap();
        prop_assert!(p.spn.unwrap().is_finite());
        prop_assert!(p.phoneme.unwrap().is_finite());
    }
}

/// Two coordinates drawn from each partition.
fn end_to_end_loss(model: &SpnModel) -> impl Fn(&mut Session, &[crate::autodiff::Var]) -> crate::Result<crate::autodiff::Var> + '_ {
    move |s, v| {
        let out = model.forward(s, v[0], Some(v[1]))?;
        joint_loss(
            &mut s.tape,
            Some(out.spn_pred),
            out.phoneme_pred,
            v[2],
            LossWeights::default(),
            Reduction::Sum,
        )
    }
}

#[test]
fn end_to_end_gradient_check() {
    for seed in 0..10 {
        let e = check_end_to_end(seed, 1).unwrap();
        assert_eq!(e.checked, 8);
        assert!(e.passed(), "{e:?}");
    }
}

#[test]
fn gradient_reaches_conv_bank_and_blstm() {
    let model = SpnModel::new(tiny(), 3).unwrap();
    let sample = random_sample("u", 6, 4);
    let inputs = [sample.features.clone(), sample.phonemes.clone(), sample.ema.clone()];
    let conv = model.speech.conv_bank.branches()[2].weight();
    let lstm = model.phoneme.as_ref().unwrap().layers[0].forward_dir.input_weight();
    // a weight column fed by a phoneme that actually occurs
    let active = sample.phonemes.row(0).iter().position(|&v| v == 1.0).unwrap();
    let coords = [Coord::Param(conv, 5), Coord::Param(lstm, 2 * 39 + active)];
    let report =
        param_grad_check_with(model.store(), &inputs, end_to_end_loss(&model), &coords, END_TO_END_STEP, Stencil::FivePoint)
            .unwrap();
    for r in &report.results {
        assert!(r.analytic.abs() > 1e-8, "{r:?}");
        assert!(r.rel_error < 1e-4, "{r:?}");
    }
}

#[test]
fn s2_requires_checkpoint() {
    let mut model = SpnModel::new(tiny(), 0).unwrap();
    let err = apply_scenario(&ScenarioConfig::new(ScenarioId::S2), &mut model).unwrap_err();
    assert!(err.to_string().contains("pretrained"));
    assert!(apply_scenario(&ScenarioConfig::with_pretrained(ScenarioId::S1, "x.ckpt"), &mut model).is_err());
    assert_eq!("s3".parse::<ScenarioId>().unwrap(), ScenarioId::S3);
    assert!("S4".parse::<ScenarioId>().is_err());
}

fn partition_values(model: &SpnModel, part: Partition) -> Vec<Vec<u64>> {
    model
        .store()
        .iter()
        .filter(|(_, p)| p.partition == part)
        .map(|(_, p)| p.value.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn s1_leaves_other_partitions_untouched() {
    let data = synthetic(4, 1);
    let mut model = SpnModel::new(tiny(), 1).unwrap();
    let before: Vec<_> = Partition::ALL.iter().map(|&p| partition_values(&model, p)).collect();
    let plan = apply_scenario(&ScenarioConfig::new(ScenarioId::S1), &mut model).unwrap();
    train(&mut model, &plan, &data, &[], &quick(1, 2)).unwrap();
    for (i, &p) in Partition::ALL.iter().enumerate() {
        let same = partition_values(&model, p) == before[i];
        assert_eq!(same, p != Partition::PhonemeStream, "{p}");
    }
}

#[test]
fn s2_keeps_pretrained_phoneme_stream_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(4, 2);
    let mut pre = SpnModel::new(tiny(), 5).unwrap();
    let plan = ScenarioPlan::for_model(ScenarioId::S1, &pre).unwrap();
    train(&mut pre, &plan, &data, &[], &quick(5, 2)).unwrap();
    let path = dir.path().join("s1.ckpt");
    crate::data::save_checkpoint(&path, &Checkpoint::from_model(&pre, Some(ScenarioId::S1), None, 5, "h")).unwrap();

    let mut model = SpnModel::new(tiny(), 6).unwrap();
    let plan = apply_scenario(&ScenarioConfig::with_pretrained(ScenarioId::S2, &path), &mut model).unwrap();
    assert_eq!(model.normalizer, pre.normalizer);
    let speech_before = partition_values(&model, Partition::SpeechStream);
    train(&mut model, &plan, &data, &[], &quick(6, 3)).unwrap();
    assert_eq!(
        partition_values(&model, Partition::PhonemeStream),
        partition_values(&pre, Partition::PhonemeStream)
    );
    assert_ne!(partition_values(&model, Partition::SpeechStream), speech_before);
}

#[test]
fn s3_moves_every_partition_in_one_step() {
    let data = synthetic(1, 3);
    let mut model = SpnModel::new(tiny(), 3).unwrap();
    let before = model.store().clone();
    let plan = ScenarioPlan::for_model(ScenarioId::S3, &model).unwrap();
    let trace = train(&mut model, &plan, &data, &[], &quick(3, 1)).unwrap();
    assert_eq!(trace.steps, 1);
    for part in Partition::ALL {
        let change = model
            .store()
            .iter()
            .zip(before.iter())
            .filter(|((_, p), _)| p.partition == part)
            .map(|((_, a), (_, b))| a.value.max_abs_diff(&b.value))
            .fold(0.0, f64::max);
        assert!(change > 0.0, "{part} did not move");
    }
}

#[test]
fn training_is_deterministic_and_validation_is_read_only() {
    let data = synthetic(6, 4);
    let (tr, val) = data.split_at(4);
    let run = || {
        let mut m = SpnModel::new(tiny(), 8).unwrap();
        let plan = ScenarioPlan::for_model(ScenarioId::S3, &m).unwrap();
        let mut h = quick(8, 3);
        h.batch_size = 3;
        let trace = train(&mut m, &plan, tr, val, &h).unwrap();
        (Checkpoint::from_model(&m, Some(ScenarioId::S3), Some(h), 8, "h").to_bytes().unwrap(), trace, m)
    };
    let (a, ta, m) = run();
    let (b, tb, _) = run();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(ta.epochs.len(), 3);
    assert_eq!(ta.steps, 6);
    assert!(ta.epochs.iter().all(|e| e.val_loss.is_some()));

    let plan = ScenarioPlan::for_model(ScenarioId::S3, &m).unwrap();
    mean_loss(&m, &plan, val, &quick(8, 1)).unwrap();
    let after = Checkpoint::from_model(&m, Some(ScenarioId::S3), Some(quick(8, 3)), 8, "h");
    let mut h = quick(8, 3);
    h.batch_size = 3;
    let reference = Checkpoint::from_model(&m, Some(ScenarioId::S3), Some(h), 8, "h");
    assert_eq!(after.params, reference.params);
    assert_eq!(reference.to_bytes().unwrap(), a);
}

#[test]
fn empty_utterances_are_skipped() {
    let mut data = synthetic(2, 5);
    let empty = UtteranceSample::new("empty", "spk", Tensor::zeros([0, 39]), Tensor::zeros([0, 39]), Tensor::zeros([0, 12])).unwrap();
    data.push(empty.clone());
    let mut model = SpnModel::new(tiny(), 0).unwrap();
    let plan = ScenarioPlan::for_model(ScenarioId::S3, &model).unwrap();
    let trace = train(&mut model, &plan, &data, &[], &quick(0, 1)).unwrap();
    assert_eq!(trace.skipped, vec!["empty".to_string()]);
    let err = train(&mut model, &plan, &[empty], &[], &quick(0, 1)).unwrap_err();
    assert!(err.to_string().contains("no trainable"));
}

#[test]
fn mismatched_feature_width_names_the_utterance() {
    let mut bad = random_sample("odd-one", 4, 0);
    bad.features = Tensor::zeros([4, 13]);
    let mut model = SpnModel::new(tiny(), 0).unwrap();
    let plan = ScenarioPlan::for_model(ScenarioId::S3, &model).unwrap();
    let err = train(&mut model, &plan, &[bad], &[], &quick(0, 1)).unwrap_err();
    assert!(err.to_string().contains("odd-one"), "{err}");
}

#[test]
fn normalizer_roundtrip() {
    let mut r = seeded(2);
    let a = uniform_tensor(&mut r, &[10, 12], -4.0, 9.0);
    let mut b = uniform_tensor(&mut r, &[7, 12], -4.0, 9.0);
    for i in 0..7 {
        b.data_mut()[i * 12 + 3] = 2.5;
    }
    let n = TargetNormalizer::fit([&a, &b]).unwrap();
    let z = n.normalize(&a);
    assert!(n.denormalize(&z).max_abs_diff(&a) < 1e-12);
    let all: Vec<f64> = (0..10).map(|i| z.at(i, 0)).chain((0..7).map(|i| n.normalize(&b).at(i, 0))).collect();
    let mean = all.iter().sum::<f64>() / 17.0;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 17.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
}


#[test]
fn gradient_suite_passes() {
    let entries = run_gradient_suite(0, 1).unwrap();
    assert_eq!(entries.iter().filter(|e| e.group == "layer").count(), 5);
    let e2e = entries.last().unwrap();
    assert_eq!(e2e.checked, 8);
    for e in &entries {
        assert!(e.passed(), "{e:?}");
    }
}
