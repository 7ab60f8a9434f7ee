use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::UtteranceSample;
use crate::error::{Error, Result};
use crate::model::loss::{joint_loss, LossWeights, Reduction};
use crate::model::net::SpnModel;
use crate::model::normalize::TargetNormalizer;
use crate::model::scenario::ScenarioPlan;
use crate::nn::{AdamConfig, AdamState, Session, TrainableSet};
use crate::rng;

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss_weights: LossWeights,
    pub reduction: Reduction,
    pub seed: u64,
}

impl TrainConfig {
    /// 20 epochs, batches of 5, Adam at 1e-4, unit loss weights.
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 5,
            adam: AdamConfig::default(),
            loss_weights: LossWeights::default(),
            reduction: Reduction::FrameMean,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", a.learning_rate)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::invalid("adam: need 0 <= beta < 1 and epsilon > 0"));
        }
        let w = self.loss_weights;
        if !(w.spn >= 0.0 && w.phoneme >= 0.0 && w.spn.is_finite() && w.phoneme.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-utterance loss over the epoch, each taken before the update
    /// of its batch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Utterances left out because they have no frames.
    pub skipped: Vec<String>,
    pub steps: u64,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, val));
        }
        out
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn min_loss(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.train_loss).min_by(f64::total_cmp)
    }
}

fn check_sample(model: &SpnModel, plan: &ScenarioPlan, s: &UtteranceSample) -> Result<()> {
    let cfg = model.config();
    let mut problems = Vec::new();
    if plan.uses_speech && s.features.cols() != cfg.acoustic_dim {
        problems.push(format!("features have {} columns, model expects {}", s.features.cols(), cfg.acoustic_dim));
    }
    if model.has_phoneme_stream() && s.phonemes.cols() != cfg.phoneme_dim {
        problems.push(format!("phonemes have {} columns, model expects {}", s.phonemes.cols(), cfg.phoneme_dim));
    }
    if s.ema.cols() != cfg.output_dim {
        problems.push(format!("targets have {} columns, model predicts {}", s.ema.cols(), cfg.output_dim));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::data(s.id.clone(), problems.join("; ")))
    }
}

/// Loss of one utterance under `plan`, with parameter gradients when
/// `with_grads` is set. Targets go through the model's normalizer.
pub fn utterance_loss(
    model: &SpnModel,
    plan: &ScenarioPlan,
    sample: &UtteranceSample,
    hyper: &TrainConfig,
    with_grads: bool,
) -> Result<(f64, Option<Vec<Option<Tensor>>>)> {
    let trainable = if with_grads { plan.trainable } else { TrainableSet::none() };
    let mut s = Session::new(model.store(), trainable);
    let target = match &model.normalizer {
        Some(n) => n.normalize(&sample.ema),
        None => sample.ema.clone(),
    };
    let target = s.input(target);
    let phonemes = s.input(sample.phonemes.clone());
    let (spn, phoneme) = if plan.uses_speech {
        let mfcc = s.input(sample.features.clone());
        let out = model.forward(&mut s, mfcc, model.has_phoneme_stream().then_some(phonemes))?;
        (Some(out.spn_pred), out.phoneme_pred)
    } else {
        (None, Some(model.phoneme_forward(&mut s, phonemes)?))
    };
    let weights = LossWeights {
        spn: if plan.spn_term { hyper.loss_weights.spn } else { 0.0 },
        phoneme: if plan.phoneme_term { hyper.loss_weights.phoneme } else { 0.0 },
    };
    let loss = joint_loss(&mut s.tape, spn, phoneme, target, weights, hyper.reduction)
        .map_err(|e| Error::data(sample.id.clone(), e.to_string()))?;
    let value = s.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "training loss", index: 0 });
    }
    let grads = if with_grads { Some(s.backward(loss)?) } else { None };
    Ok((value, grads))
}

/// Mean loss over `samples` without touching parameters.
pub fn mean_loss(model: &SpnModel, plan: &ScenarioPlan, samples: &[UtteranceSample], hyper: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for s in samples.iter().filter(|s| s.frames() > 0) {
        total += utterance_loss(model, plan, s, hyper, false)?.0;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no utterances with frames to evaluate"));
    }
    Ok(total / n as f64)
}

fn accumulate(acc: &mut [Option<Tensor>], grads: Vec<Option<Tensor>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => {
                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
            (None, Some(g)) => *a = Some(g),
            (_, None) => {}
        }
    }
}

/// Trains `model` in place. Every epoch visits the training utterances in a
/// seeded random order; each batch runs its utterances one by one, averages
/// their gradients and takes one Adam step.
pub fn train(
    model: &mut SpnModel,
    plan: &ScenarioPlan,
    train_set: &[UtteranceSample],
    val_set: &[UtteranceSample],
    hyper: &TrainConfig,
) -> Result<TrainTrace> {
    hyper.validate()?;
    let mut trace = TrainTrace::default();
    let mut usable = Vec::with_capacity(train_set.len());
    for s in train_set {
        if s.frames() == 0 {
            log::warn!("skipping utterance {} with no frames", s.id);
            trace.skipped.push(s.id.clone());
            continue;
        }
        check_sample(model, plan, s)?;
        usable.push(s);
    }
    if usable.is_empty() {
        return Err(Error::invalid("no trainable utterances (all skipped or none given)"));
    }
    let val: Vec<UtteranceSample> = val_set.iter().filter(|s| s.frames() > 0).cloned().collect();
    for s in &val {
        check_sample(model, plan, s)?;
    }
    if model.normalizer.is_none() {
        model.normalizer = Some(TargetNormalizer::fit(usable.iter().map(|s| &s.ema))?);
    }

    let mut adam = AdamState::new(hyper.adam, model.store());
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut shuffle_rng = rng::stream(hyper.seed, "batch-order");
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let mut acc: Vec<Option<Tensor>> = vec![None; model.store().len()];
            for &i in batch {
                let sample = usable[i];
                let (loss, grads) = utterance_loss(model, plan, sample, hyper, true)?;
                epoch_loss += loss;
                accumulate(&mut acc, grads.expect("requested"));
            }
            let scale = 1.0 / batch.len() as f64;
            for g in acc.iter_mut().flatten() {
                for x in g.data_mut() {
                    *x *= scale;
                }
            }
            if let Some((k, _)) = acc
                .iter()
                .enumerate()
                .find(|(_, g)| g.as_ref().is_some_and(|g| !g.is_finite()))
            {
                return Err(Error::NonFinite { what: "gradient", index: k });
            }
            adam.step(model.store_mut(), &acc, plan.trainable)?;
            trace.steps += 1;
        }
        let train_loss = epoch_loss / usable.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(model, plan, &val, hyper)?)
        };
        log::info!(
            "{} epoch {epoch}/{}: train {train_loss:.6}{}",
            plan.id,
            hyper.epochs,
            val_loss.map(|v| format!(" val {v:.6}")).unwrap_or_default()
        );
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(trace)
}
