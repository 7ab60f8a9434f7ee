//! Shared fixtures for the benchmarks.

use spn_core::data::{synthesize, SyntheticSpec, UtteranceSample};
use spn_core::rng::{seeded, uniform_tensor};
use spn_core::Tensor;

/// Random features and one-hot phonemes for a `frames`-long utterance.
pub fn random_utterance(frames: usize, seed: u64) -> UtteranceSample {
    let mut r = seeded(seed);
    let features = uniform_tensor(&mut r, &[frames, 39], -1.0, 1.0);
    let mut phonemes = Tensor::zeros([frames, 39]);
    for i in 0..frames {
        phonemes.data_mut()[i * 39 + (i / 10) % 39] = 1.0;
    }
    let ema = uniform_tensor(&mut r, &[frames, 12], -1.0, 1.0);
    UtteranceSample::new("bench", "spk00", features, phonemes, ema).expect("consistent frame counts")
}

/// A small synthetic corpus held in memory.
pub fn corpus(speakers: usize, utts: usize, seed: u64) -> Vec<UtteranceSample> {
    synthesize(&SyntheticSpec::new(speakers, utts, seed))
        .expect("valid spec")
        .iter()
        .map(|u| u.to_sample().expect("consistent frame counts"))
        .collect()
}
