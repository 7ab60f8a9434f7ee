use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{parse_matrix_csv, save_checkpoint, Checkpoint, UtteranceSample};
use crate::error::{Error, Result};
use crate::eval::folds::{plan_folds, speakers_of, FoldPlan};
use crate::eval::metrics::ScoredChannels;
use crate::eval::report::{pool, score_utterance, EvalReport, FoldRow, FoldStatus, OutputReport, UtteranceScore};
use crate::features::EMA_CHANNELS;
use crate::model::{
    load_pretrained_phoneme_stream, train, ScenarioId, ScenarioPlan, SpnConfig, SpnModel, TrainConfig, TrainTrace,
};

/// Which model output is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    Phoneme,
    Spn,
}

/// A trained configuration compared by the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Scenario(ScenarioId),
    /// Full pipeline without the phoneme stream, trained like S3.
    SpnS,
}

impl Arm {
    pub fn label(self) -> String {
        match self {
            Arm::Scenario(id) => id.to_string(),
            Arm::SpnS => "SPN-S".into(),
        }
    }

    /// Scored outputs and their report names.
    pub fn outputs(self) -> Vec<(String, OutputKind)> {
        match self {
            Arm::Scenario(ScenarioId::S1) => vec![("S1".into(), OutputKind::Phoneme)],
            Arm::Scenario(ScenarioId::S2) => vec![("S2".into(), OutputKind::Spn)],
            Arm::Scenario(ScenarioId::S3) => vec![
                ("S3(P)".into(), OutputKind::Phoneme),
                ("S3(S)".into(), OutputKind::Spn),
            ],
            Arm::SpnS => vec![("SPN-S".into(), OutputKind::Spn)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub config: SpnConfig,
    pub hyper: TrainConfig,
    pub channels: ScoredChannels,
    pub train_fraction: f64,
    /// Folds run concurrently on this many threads.
    pub jobs: usize,
    /// When set, checkpoints, loss traces and predictions are written here
    /// and scores are computed from the prediction files read back.
    pub output_dir: Option<PathBuf>,
    /// Stored in fold checkpoints.
    pub feature_hash: String,
}

impl EvalOptions {
    pub fn new(config: SpnConfig, hyper: TrainConfig) -> Self {
        EvalOptions {
            config,
            hyper,
            channels: ScoredChannels::Tongue,
            train_fraction: 0.8,
            jobs: 1,
            output_dir: None,
            feature_hash: String::new(),
        }
    }
}

/// Prediction CSV: `frame` then one column per articulator channel.
pub fn format_prediction_csv(pred: &Tensor) -> String {
    let mut out = String::from("frame");
    for c in EMA_CHANNELS.iter().take(pred.cols()) {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for i in 0..pred.rows() {
        out.push_str(&i.to_string());
        for v in pred.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn read_prediction_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let with_frame = parse_matrix_csv(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
    if with_frame.cols() < 2 {
        return Err(Error::data(path.display().to_string(), "no channel columns"));
    }
    Ok(with_frame.select_cols(1, with_frame.cols()))
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Predicts, optionally persists and re-reads, and scores each utterance.
pub fn score_model(
    model: &SpnModel,
    samples: &[&UtteranceSample],
    outputs: &[(String, OutputKind)],
    channels: ScoredChannels,
    prediction_dir: Option<&Path>,
) -> Result<Vec<Vec<UtteranceScore>>> {
    let mut scores = vec![Vec::with_capacity(samples.len()); outputs.len()];
    for s in samples {
        if s.frames() == 0 {
            log::warn!("{}: no frames; not scored", s.id);
            continue;
        }
        let needs_spn = outputs.iter().any(|(_, k)| *k == OutputKind::Spn);
        let (spn, phoneme) = if needs_spn {
            let p = model
                .predict(&s.features, &s.phonemes)
                .map_err(|e| Error::data(s.id.clone(), e.to_string()))?;
            (p.spn, p.phoneme)
        } else {
            let p = model
                .predict_phoneme(&s.phonemes)
                .map_err(|e| Error::data(s.id.clone(), e.to_string()))?;
            (None, Some(p))
        };
        for (k, (name, kind)) in outputs.iter().enumerate() {
            let pred = match kind {
                OutputKind::Spn => spn.as_ref(),
                OutputKind::Phoneme => phoneme.as_ref(),
            }
            .ok_or_else(|| Error::invalid(format!("model does not produce output {name}")))?;
            let pred = match prediction_dir {
                Some(dir) => {
                    let path = dir.join(safe_name(name)).join(format!("{}.csv", safe_name(&s.id)));
                    write_file(&path, &format_prediction_csv(pred))?;
                    read_prediction_csv(&path)?
                }
                None => pred.clone(),
            };
            scores[k].push(score_utterance(&s.id, &s.speaker, &pred, &s.ema, channels)?);
        }
    }
    Ok(scores)
}

struct FoldResult {
    per_output: Vec<std::result::Result<Vec<UtteranceScore>, (String, bool)>>,
    frames: usize,
}

fn train_fold(
    samples: &[UtteranceSample],
    plan: &FoldPlan,
    arm: Arm,
    opts: &EvalOptions,
    fold_dir: Option<&Path>,
) -> Result<(SpnModel, Vec<(String, TrainTrace)>)> {
    let pick = |idx: &[usize]| -> Vec<UtteranceSample> { idx.iter().map(|&i| samples[i].clone()).collect() };
    let (train_set, val_set) = (pick(&plan.train), pick(&plan.val));
    let seed = opts.hyper.seed;
    let mut traces = Vec::new();
    let mut run = |model: &mut SpnModel, id: ScenarioId, tag: &str| -> Result<()> {
        let sp = ScenarioPlan::for_model(id, model)?;
        let trace = train(model, &sp, &train_set, &val_set, &opts.hyper)?;
        traces.push((tag.to_string(), trace));
        Ok(())
    };
    let model = match arm {
        Arm::Scenario(ScenarioId::S2) => {
            let mut pre = SpnModel::new(opts.config.clone(), seed)?;
            run(&mut pre, ScenarioId::S1, "pretrain_s1")?;
            let mut model = SpnModel::new(opts.config.clone(), seed)?;
            load_pretrained_phoneme_stream(&mut model, &pre)?;
            run(&mut model, ScenarioId::S2, "s2")?;
            model
        }
        Arm::Scenario(id) => {
            let mut model = SpnModel::new(opts.config.clone(), seed)?;
            run(&mut model, id, &id.to_string().to_lowercase())?;
            model
        }
        Arm::SpnS => {
            let mut model = SpnModel::new(opts.config.clone().without_phoneme_stream(), seed)?;
            run(&mut model, ScenarioId::S3, "spn_s")?;
            model
        }
    };
    if let Some(dir) = fold_dir {
        let scenario = match arm {
            Arm::Scenario(id) => id,
            Arm::SpnS => ScenarioId::S3,
        };
        let ckpt = Checkpoint::from_model(&model, Some(scenario), Some(opts.hyper.clone()), seed, &opts.feature_hash);
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join("model.ckpt"), &ckpt)?;
        for (tag, trace) in &traces {
            write_file(&dir.join(format!("trace_{tag}.csv")), &trace.to_csv())?;
        }
    }
    Ok((model, traces))
}

fn run_fold(samples: &[UtteranceSample], k: usize, plan: &FoldPlan, arm: Arm, opts: &EvalOptions) -> FoldResult {
    let outputs = arm.outputs();
    let test: Vec<&UtteranceSample> = plan.test.iter().map(|&i| &samples[i]).collect();
    let frames = test.iter().map(|s| s.frames()).sum();
    let fold_dir = opts
        .output_dir
        .as_ref()
        .map(|d| d.join(format!("fold{k:02}_{}", safe_name(&plan.held_out_speaker))));
    let fail = |e: Error| {
        let numerical = e.is_numerical();
        log::warn!("fold {k} ({}): {e}", plan.held_out_speaker);
        FoldResult {
            per_output: outputs.iter().map(|_| Err((e.to_string(), numerical))).collect(),
            frames,
        }
    };
    if plan.train.is_empty() {
        return fail(Error::invalid("no training utterances for this fold"));
    }
    let model = match train_fold(samples, plan, arm, opts, fold_dir.as_deref()) {
        Ok((m, _)) => m,
        Err(e) => return fail(e),
    };
    let pred_dir = fold_dir.as_ref().map(|d| d.join("predictions"));
    match score_model(&model, &test, &outputs, opts.channels, pred_dir.as_deref()) {
        Ok(scores) => FoldResult {
            per_output: scores.into_iter().map(Ok).collect(),
            frames,
        },
        Err(e) => fail(e),
    }
}

fn assemble(
    label: String,
    seed: u64,
    channels: ScoredChannels,
    outputs: &[(String, OutputKind)],
    rows: Vec<(FoldRow, FoldResult)>,
) -> EvalReport {
    let outputs = outputs
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let mut folds = Vec::with_capacity(rows.len());
            let mut utterances = Vec::new();
            for (row, result) in &rows {
                let status = match &result.per_output[k] {
                    Ok(scores) => match pool(scores) {
                        Ok((rmse, pcc)) => {
                            utterances.extend(scores.iter().cloned());
                            FoldStatus::Ok { rmse, pcc }
                        }
                        Err(e) => FoldStatus::Failed {
                            reason: e.to_string(),
                            numerical: false,
                        },
                    },
                    Err((reason, numerical)) => FoldStatus::Failed {
                        reason: reason.clone(),
                        numerical: *numerical,
                    },
                };
                folds.push(FoldRow {
                    frames: result.frames,
                    status,
                    ..row.clone()
                });
            }
            OutputReport::new(name.clone(), folds, utterances)
        })
        .collect();
    EvalReport {
        label,
        seed,
        channels: channels.names().iter().map(|s| s.to_string()).collect(),
        outputs,
    }
}

/// Leave-one-speaker-out: one fold per speaker, each trained from scratch
/// on the other speakers and tested on all of the held-out speaker's data.
pub fn run_loso(samples: &[UtteranceSample], arm: Arm, opts: &EvalOptions) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no utterances to evaluate"));
    }
    let speakers = speakers_of(samples);
    if speakers.len() < 2 {
        log::warn!(
            "only {} speaker(s): leave-one-speaker-out is degenerate and every fold lacks training data",
            speakers.len()
        );
    }
    let plans = plan_folds(samples, opts.train_fraction, opts.hyper.seed)?;
    for p in &plans {
        p.validate(samples)?;
    }
    let work = |k: usize| run_fold(samples, k, &plans[k], arm, opts);
    let results: Vec<FoldResult> = if opts.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| (0..plans.len()).into_par_iter().map(work).collect())
    } else {
        (0..plans.len()).map(work).collect()
    };
    let rows = plans
        .iter()
        .zip(results)
        .enumerate()
        .map(|(k, (p, r))| {
            (
                FoldRow {
                    fold: k,
                    speaker: p.held_out_speaker.clone(),
                    train_utterances: p.train.len(),
                    val_utterances: p.val.len(),
                    test_utterances: p.test.len(),
                    frames: 0,
                    status: FoldStatus::Failed {
                        reason: String::new(),
                        numerical: false,
                    },
                },
                r,
            )
        })
        .collect();
    let report = assemble(arm.label(), opts.hyper.seed, opts.channels, &arm.outputs(), rows);
    if let Some(dir) = &opts.output_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

/// Full model against the model without a phoneme stream, with identical
/// folds, seeds and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    /// Full model trained jointly; its `S3(S)` output is the SPN arm.
    pub spn: EvalReport,
    pub spn_s: EvalReport,
}

impl AblationReport {
    pub fn spn_output(&self) -> &OutputReport {
        self.spn.output("S3(S)").expect("S3 report has a full-model output")
    }

    pub fn spn_s_output(&self) -> &OutputReport {
        self.spn_s.output("SPN-S").expect("ablation report has an SPN-S output")
    }

    /// Both arms side by side.
    pub fn summary(&self) -> EvalReport {
        let mut spn = self.spn_output().clone();
        spn.name = "SPN".into();
        EvalReport {
            label: "ablation".into(),
            seed: self.spn.seed,
            channels: self.spn.channels.clone(),
            outputs: vec![spn, self.spn_s_output().clone()],
        }
    }
}

pub fn run_ablation(samples: &[UtteranceSample], opts: &EvalOptions) -> Result<AblationReport> {
    let arm_opts = |name: &str| {
        let mut o = opts.clone();
        o.output_dir = opts.output_dir.as_ref().map(|d| d.join(name));
        o
    };
    let spn = run_loso(samples, Arm::Scenario(ScenarioId::S3), &arm_opts("spn"))?;
    let spn_s = run_loso(samples, Arm::SpnS, &arm_opts("spn_s"))?;
    let report = AblationReport { spn, spn_s };
    if let Some(dir) = &opts.output_dir {
        write_report(dir, &report.summary())?;
    }
    Ok(report)
}

/// Scores one trained model per speaker.
pub fn evaluate_model(
    model: &SpnModel,
    samples: &[UtteranceSample],
    outputs: &[(String, OutputKind)],
    channels: ScoredChannels,
    label: &str,
    seed: u64,
    prediction_dir: Option<&Path>,
) -> Result<EvalReport> {
    let speakers = speakers_of(samples);
    let mut rows = Vec::with_capacity(speakers.len());
    for (k, spk) in speakers.iter().enumerate() {
        let group: Vec<&UtteranceSample> = samples.iter().filter(|s| &s.speaker == spk).collect();
        let frames = group.iter().map(|s| s.frames()).sum();
        let scores = score_model(model, &group, outputs, channels, prediction_dir)?;
        rows.push((
            FoldRow {
                fold: k,
                speaker: spk.clone(),
                train_utterances: 0,
                val_utterances: 0,
                test_utterances: group.len(),
                frames,
                status: FoldStatus::Failed {
                    reason: String::new(),
                    numerical: false,
                },
            },
            FoldResult {
                per_output: scores.into_iter().map(Ok).collect(),
                frames,
            },
        ));
    }
    Ok(assemble(label.to_string(), seed, channels, outputs, rows))
}

/// Writes `folds.csv`, `utterances.csv`, `report.txt` and `report.json`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_file(&dir.join("folds.csv"), &report.folds_csv())?;
    write_file(&dir.join("utterances.csv"), &report.utterances_csv())?;
    write_file(&dir.join("report.txt"), &report.table())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::invalid(e.to_string()))?;
    write_file(&dir.join("report.json"), &(json + "\n"))
}
