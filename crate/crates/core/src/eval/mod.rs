//! Metrics, the leave-one-speaker-out protocol, ablation and reports.

mod folds;
mod metrics;
mod protocol;
mod report;

pub use folds::{plan_folds, speakers_of, stratified_split, FoldPlan};
pub use metrics::{pcc, rmse, PccScores, RmseScores, ScoredChannels};
pub use protocol::{
    evaluate_model, format_prediction_csv, read_prediction_csv, run_ablation, run_loso, score_model, write_report,
    AblationReport, Arm, EvalOptions, OutputKind,
};
pub use report::{
    grand_mean, pool, score_utterance, EvalReport, FoldRow, FoldStatus, OutputReport, UtteranceScore, LADDER,
};
