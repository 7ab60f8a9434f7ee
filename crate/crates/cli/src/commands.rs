use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use spn_core::data::{generate_synthetic, load_checkpoint, load_manifest, save_checkpoint, Checkpoint, Dataset, SyntheticSpec};
use spn_core::eval::{
    evaluate_model, run_ablation, run_loso, stratified_split, write_report, Arm, EvalOptions, EvalReport, OutputKind,
    ScoredChannels,
};
use spn_core::model::{
    apply_scenario, run_gradient_suite, train, LossWeights, Reduction, ScenarioConfig, ScenarioId, SpnConfig,
    SpnModel, TrainConfig,
};

use crate::args::*;

/// Bad flag combination; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// NaN/Inf reached a loss, gradient or prediction.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// A run finished but some folds could not be scored.
#[derive(Debug)]
pub struct IncompleteRun(pub String);

impl fmt::Display for IncompleteRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for IncompleteRun {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Creates `<root>/<command>-<hash>`, where the hash covers the resolved
/// config, and writes the config there.
fn run_dir<T: Serialize>(out: &OutArgs, command: &str, config: &T) -> Result<PathBuf> {
    let json = to_json(config)?;
    let dir = out.out.join(format!("{command}-{}", &sha256_hex(json.as_bytes())[..16]));
    if dir.exists() && std::fs::read_dir(&dir)?.next().is_some() {
        if !out.force {
            return Err(usage(format!(
                "run directory {} already exists; pass --force to replace it",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("config.json"), &json)?;
    Ok(dir)
}

/// Wall-clock time, kept apart from the reproducible outputs.
fn write_timing(dir: &Path, start: Instant) -> Result<()> {
    write(
        &dir.join("timing.json"),
        &to_json(&serde_json::json!({ "wall_seconds": start.elapsed().as_secs_f64() }))?,
    )
}

fn model_config(size: ModelSize) -> SpnConfig {
    match size {
        ModelSize::Full => SpnConfig::default(),
        ModelSize::Desk => SpnConfig::desk(),
    }
}

fn train_config(h: &HyperArgs) -> Result<TrainConfig> {
    let mut t = TrainConfig::new(h.seed);
    t.epochs = h.epochs;
    t.batch_size = h.batch_size;
    t.adam.learning_rate = h.lr;
    t.loss_weights = LossWeights {
        spn: h.spn_weight,
        phoneme: h.phoneme_weight,
    };
    t.reduction = match h.reduction {
        ReductionArg::FrameMean => Reduction::FrameMean,
        ReductionArg::Sum => Reduction::Sum,
    };
    t.validate().map_err(|e| usage(e.to_string()))?;
    if !(h.train_fraction > 0.0 && h.train_fraction <= 1.0) {
        return Err(usage(format!("--train_fraction {} outside (0, 1]", h.train_fraction)));
    }
    Ok(t)
}

fn channels(c: ChannelsArg) -> ScoredChannels {
    match c {
        ChannelsArg::Tongue => ScoredChannels::Tongue,
        ChannelsArg::All => ScoredChannels::All,
    }
}

fn scenario(s: ScenarioArg) -> ScenarioId {
    match s {
        ScenarioArg::S1 => ScenarioId::S1,
        ScenarioArg::S2 => ScenarioId::S2,
        ScenarioArg::S3 => ScenarioId::S3,
    }
}

fn load(manifest: &Path) -> Result<Dataset> {
    load_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))
}

/// Fails with the matching exit class when any fold failed.
fn check_report(report: &EvalReport) -> Result<()> {
    if report.any_numerical_failure() {
        return Err(NumericalFailure(format!("{}: a fold hit a non-finite value; see folds.csv", report.label)).into());
    }
    if !report.all_ok() {
        return Err(IncompleteRun(format!("{}: some folds failed; no grand mean; see folds.csv", report.label)).into());
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.out.exists() && std::fs::read_dir(&a.out)?.next().is_some() {
        if !a.force {
            return Err(usage(format!(
                "{} exists and is not empty; pass --force to overwrite",
                a.out.display()
            )));
        }
        std::fs::remove_dir_all(&a.out).with_context(|| format!("clearing {}", a.out.display()))?;
    }
    let mut spec = SyntheticSpec::new(a.speakers, a.utts, a.seed);
    spec.speaker_offset_scale = a.speaker_offset_scale;
    spec.noise_scale = a.noise_scale;
    spec.acoustic_noise = a.acoustic_noise;
    spec.acoustic_phoneme_gain = a.acoustic_phoneme_gain;
    spec.acoustic_ema_gain = a.acoustic_ema_gain;
    spec.smoothing = a.smoothing;
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let manifest = generate_synthetic(&spec, &a.out)?;
    if a.speakers == 1 {
        log::warn!("one speaker: leave-one-speaker-out on this corpus is degenerate");
    }
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainRun<'a> {
    command: &'static str,
    manifest_sha256: String,
    feature_hash: String,
    scenario: ScenarioArg,
    pretrained_sha256: Option<String>,
    no_phoneme_stream: bool,
    hyper: &'a HyperArgs,
    model: SpnConfig,
    train: TrainConfig,
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let id = scenario(a.scenario);
    match (id, &a.pretrained) {
        (ScenarioId::S2, None) => return Err(usage("scenario s2 requires --pretrained <checkpoint>")),
        (ScenarioId::S1 | ScenarioId::S3, Some(_)) => return Err(usage("--pretrained is only used by scenario s2")),
        _ => {}
    }
    if a.no_phoneme_stream && id != ScenarioId::S3 {
        return Err(usage("--no_phoneme_stream requires scenario s3"));
    }
    let hyper = train_config(&a.hyper)?;
    let start = Instant::now();
    let data = load(&a.manifest)?;
    let feature_hash = data.feature_hash();
    let mut config = model_config(a.hyper.model);
    if a.no_phoneme_stream {
        config = config.without_phoneme_stream();
    }
    if let Some(p) = &a.pretrained {
        let ck = load_checkpoint(p, Some(&feature_hash)).with_context(|| format!("pretrained {}", p.display()))?;
        if ck.meta.config != config {
            bail!(spn_core::Error::Invalid(format!(
                "pretrained {} has a different architecture (model size)",
                p.display()
            )));
        }
    }
    let run = TrainRun {
        command: "train",
        manifest_sha256: file_digest(&a.manifest)?,
        feature_hash: feature_hash.clone(),
        scenario: a.scenario,
        pretrained_sha256: a.pretrained.as_deref().map(file_digest).transpose()?,
        no_phoneme_stream: a.no_phoneme_stream,
        hyper: &a.hyper,
        model: config.clone(),
        train: hyper.clone(),
    };
    let dir = run_dir(&a.out, "train", &run)?;

    let split = stratified_split(&data.samples, a.hyper.train_fraction, a.hyper.seed)?;
    let pick = |f: fn(&(String, Vec<usize>, Vec<usize>)) -> &Vec<usize>| {
        let mut idx: Vec<usize> = split.iter().flat_map(|s| f(s).iter().copied()).collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| data.samples[i].clone()).collect::<Vec<_>>()
    };
    let (train_set, val_set) = (pick(|s| &s.1), pick(|s| &s.2));
    log::info!("{} training and {} validation utterances", train_set.len(), val_set.len());

    let mut model = SpnModel::new(config, a.hyper.seed)?;
    let sc = ScenarioConfig {
        id,
        pretrained: a.pretrained.clone(),
    };
    let plan = apply_scenario(&sc, &mut model)?;
    let trace = train(&mut model, &plan, &train_set, &val_set, &hyper)?;
    let ck = Checkpoint::from_model(&model, Some(id), Some(hyper), a.hyper.seed, &feature_hash);
    save_checkpoint(&dir.join("model.ckpt"), &ck)?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    write_timing(&dir, start)?;
    println!("{}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalRun {
    command: &'static str,
    checkpoint_sha256: String,
    manifest_sha256: String,
    channels: ChannelsArg,
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let data = load(&a.manifest)?;
    let ck = load_checkpoint(&a.checkpoint, Some(&data.feature_hash()))
        .with_context(|| format!("checkpoint {}", a.checkpoint.display()))?;
    let scenario = ck.meta.scenario;
    let seed = ck.meta.seed;
    let model = ck.into_model()?;
    let outputs: Vec<(String, OutputKind)> = match (scenario, model.has_phoneme_stream()) {
        (Some(ScenarioId::S1), _) => vec![("phoneme".into(), OutputKind::Phoneme)],
        (_, true) => vec![("SPN".into(), OutputKind::Spn), ("phoneme".into(), OutputKind::Phoneme)],
        (_, false) => vec![("SPN".into(), OutputKind::Spn)],
    };
    let run = EvalRun {
        command: "eval",
        checkpoint_sha256: file_digest(&a.checkpoint)?,
        manifest_sha256: file_digest(&a.manifest)?,
        channels: a.channels,
    };
    let dir = run_dir(&a.out, "eval", &run)?;
    let report = evaluate_model(
        &model,
        &data.samples,
        &outputs,
        channels(a.channels),
        "eval",
        seed,
        Some(&dir.join("predictions")),
    )?;
    write_report(&dir, &report)?;
    write_timing(&dir, start)?;
    print!("{}", report.table());
    println!("{}", dir.display());
    check_report(&report)
}

#[derive(Serialize)]
struct ProtocolRun<'a> {
    command: &'static str,
    manifest_sha256: String,
    feature_hash: String,
    arm: Option<ArmArg>,
    channels: ChannelsArg,
    hyper: &'a HyperArgs,
    model: SpnConfig,
    train: TrainConfig,
}

fn eval_options(hyper: &HyperArgs, ch: ChannelsArg, jobs: usize, data: &Dataset, dir: &Path) -> Result<EvalOptions> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let mut opts = EvalOptions::new(model_config(hyper.model), train_config(hyper)?);
    opts.channels = channels(ch);
    opts.train_fraction = hyper.train_fraction;
    opts.jobs = jobs;
    opts.output_dir = Some(dir.to_path_buf());
    opts.feature_hash = data.feature_hash();
    Ok(opts)
}

pub fn loso_cmd(a: &LosoArgs) -> Result<()> {
    let hyper = train_config(&a.hyper)?;
    let start = Instant::now();
    let data = load(&a.manifest)?;
    let arm = match a.arm {
        ArmArg::S1 => Arm::Scenario(ScenarioId::S1),
        ArmArg::S2 => Arm::Scenario(ScenarioId::S2),
        ArmArg::S3 => Arm::Scenario(ScenarioId::S3),
        ArmArg::SpnS => Arm::SpnS,
    };
    let run = ProtocolRun {
        command: "loso",
        manifest_sha256: file_digest(&a.manifest)?,
        feature_hash: data.feature_hash(),
        arm: Some(a.arm),
        channels: a.channels,
        hyper: &a.hyper,
        model: model_config(a.hyper.model),
        train: hyper,
    };
    let dir = run_dir(&a.out, "loso", &run)?;
    let opts = eval_options(&a.hyper, a.channels, a.jobs, &data, &dir)?;
    let report = run_loso(&data.samples, arm, &opts)?;
    write_timing(&dir, start)?;
    print!("{}", report.table());
    println!("{}", dir.display());
    check_report(&report)
}

pub fn ablate_cmd(a: &AblateArgs) -> Result<()> {
    let hyper = train_config(&a.hyper)?;
    let start = Instant::now();
    let data = load(&a.manifest)?;
    let run = ProtocolRun {
        command: "ablate",
        manifest_sha256: file_digest(&a.manifest)?,
        feature_hash: data.feature_hash(),
        arm: None,
        channels: a.channels,
        hyper: &a.hyper,
        model: model_config(a.hyper.model),
        train: hyper,
    };
    let dir = run_dir(&a.out, "ablate", &run)?;
    let opts = eval_options(&a.hyper, a.channels, a.jobs, &data, &dir)?;
    let report = run_ablation(&data.samples, &opts)?;
    write_timing(&dir, start)?;
    let summary = report.summary();
    print!("{}", summary.table());
    println!("{}", dir.display());
    check_report(&report.spn)?;
    check_report(&report.spn_s)
}

pub fn gradcheck_cmd(a: &GradcheckArgs) -> Result<()> {
    if a.points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    let entries = run_gradient_suite(a.seed, a.points)?;
    println!(
        "{:<11} {:<16} {:>7} {:>9} {:>13} {:>9}  result",
        "group", "check", "coords", "rejected", "max_rel_err", "tolerance"
    );
    for e in &entries {
        println!(
            "{:<11} {:<16} {:>7} {:>9} {:>13.3e} {:>9.0e}  {}",
            e.group,
            e.name,
            e.checked,
            e.rejected,
            e.max_rel_error,
            e.tolerance,
            if e.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = entries.iter().filter(|e| !e.passed()).map(|e| e.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("gradient check failed: {}", failed.join(", "))).into());
    }
    Ok(())
}
