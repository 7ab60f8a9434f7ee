//! The two-stream network, its joint loss, training scenarios and trainer.

mod config;
mod gradsuite;
mod loss;
mod net;
mod normalize;
mod scenario;
mod train;

pub use config::SpnConfig;
pub use gradsuite::{
    check_end_to_end, run_gradient_suite, sampled_coords, sampled_coords_where, SuiteEntry, RESOLUTION_MARGIN, END_TO_END_STEP, END_TO_END_TOLERANCE, LAYER_STEP, LAYER_TOLERANCE,
    PRIMITIVE_STEP, PRIMITIVE_TOLERANCE,
};
pub use loss::{joint_loss, LossWeights, Reduction};
pub use net::{
    FusionNet, InversionNet, PhonemeStreamNet, Prediction, SpeechStreamNet, SpeechStreamOutput, SpnModel, SpnOutput,
};
pub use normalize::TargetNormalizer;
pub use scenario::{apply_scenario, load_pretrained_phoneme_stream, ScenarioConfig, ScenarioId, ScenarioPlan};
pub use train::{mean_loss, train, utterance_loss, EpochRecord, TrainConfig, TrainTrace};

#[cfg(test)]
mod tests;
