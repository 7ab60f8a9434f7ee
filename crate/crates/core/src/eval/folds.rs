use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::UtteranceSample;
use crate::error::{Error, Result};
use crate::rng;

/// One leave-one-speaker-out fold, as indices into the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub held_out_speaker: String,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    /// Checks disjointness, coverage and speaker membership.
    pub fn validate(&self, samples: &[UtteranceSample]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= samples.len() || !seen.insert(i) {
                return Err(Error::invalid(format!("fold {}: index {i} repeated or out of range", self.held_out_speaker)));
            }
        }
        if seen.len() != samples.len() {
            return Err(Error::invalid(format!("fold {}: not every utterance assigned", self.held_out_speaker)));
        }
        let held = |i: &usize| samples[*i].speaker == self.held_out_speaker;
        if !self.test.iter().all(held) || self.train.iter().chain(&self.val).any(held) {
            return Err(Error::invalid(format!("fold {}: held-out speaker leaks", self.held_out_speaker)));
        }
        Ok(())
    }
}

/// Speakers in order of first appearance.
pub fn speakers_of(samples: &[UtteranceSample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.speaker) {
            out.push(s.speaker.clone());
        }
    }
    out
}

/// Per-speaker split of `samples` into `(train, rest)` index lists, each
/// speaker's utterances shuffled with a stream keyed by `(seed, speaker)`.
/// Every speaker keeps at least one training utterance.
pub fn stratified_split(samples: &[UtteranceSample], train_fraction: f64, seed: u64) -> Result<Vec<(String, Vec<usize>, Vec<usize>)>> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1]")));
    }
    Ok(speakers_of(samples)
        .into_iter()
        .map(|spk| {
            let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].speaker == spk).collect();
            idx.shuffle(&mut rng::stream(seed, &format!("split/{spk}")));
            let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len());
            let mut val = idx.split_off(n_train);
            idx.sort_unstable();
            val.sort_unstable();
            (spk, idx, val)
        })
        .collect())
}

/// One fold per speaker: the other speakers' utterances split per
/// [`stratified_split`], the held-out speaker's utterances all in test.
pub fn plan_folds(samples: &[UtteranceSample], train_fraction: f64, seed: u64) -> Result<Vec<FoldPlan>> {
    let splits = stratified_split(samples, train_fraction, seed)?;
    Ok(splits
        .iter()
        .enumerate()
        .map(|(k, (spk, _, _))| {
            let mut train = Vec::new();
            let mut val = Vec::new();
            for (j, (_, t, v)) in splits.iter().enumerate() {
                if j != k {
                    train.extend(t);
                    val.extend(v);
                }
            }
            train.sort_unstable();
            val.sort_unstable();
            FoldPlan {
                held_out_speaker: spk.clone(),
                train,
                val,
                test: (0..samples.len()).filter(|&i| &samples[i].speaker == spk).collect(),
            }
        })
        .collect())
}
