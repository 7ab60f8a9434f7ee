//! Synthetic corpora with a known phoneme-to-articulator mapping.
//!
//! Each utterance is a random phoneme sequence. Its articulator trajectory
//! is the piecewise-constant sequence of per-phoneme anchors, smoothed by a
//! centred moving average, shifted by a constant per-speaker offset and
//! perturbed by Gaussian noise. Acoustic frames are a fixed random
//! `tanh(A onehot + B ema + b)` rendering plus noise, so they carry both
//! phonetic and articulatory information.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::manifest::{format_manifest, format_matrix_csv, CorpusInfo, FeatureSpec, ManifestRow, CORPUS_FILE};
use crate::data::UtteranceSample;
use crate::error::{Error, Result};
use crate::features::{
    encode_phonemes, format_alignment, format_ema_csv, AlignmentEntry, EmaTrack, PhonemeInventory, ARPABET,
    EMA_CHANNELS,
};
use crate::rng;

pub const SYNTH_HOP_SECONDS: f64 = 0.01;
pub const SYNTH_FEATURE_DIM: usize = 39;
pub const SPEC_FILE: &str = "synthetic.json";
pub const MANIFEST_FILE: &str = "manifest.csv";

const CHANNELS: usize = EMA_CHANNELS.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    /// Inclusive range of phonemes per utterance.
    pub phonemes_per_utterance: (usize, usize),
    /// Inclusive range of phoneme durations, frames.
    pub duration_frames: (usize, usize),
    /// Inclusive range of leading and of trailing silence, frames.
    pub silence_frames: (usize, usize),
    /// Articulator anchor (mm) of each phoneme that may occur.
    pub phoneme_targets: BTreeMap<String, Vec<f64>>,
    pub speaker_offset_scale: f64,
    pub noise_scale: f64,
    /// Moving-average width in frames.
    pub smoothing: usize,
    pub acoustic_noise: f64,
    pub acoustic_phoneme_gain: f64,
    pub acoustic_ema_gain: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Defaults with anchors for all 39 phonemes drawn uniformly from
    /// `[-10, 10]` mm.
    pub fn new(speakers: usize, utterances_per_speaker: usize, seed: u64) -> Self {
        SyntheticSpec {
            speakers,
            utterances_per_speaker,
            phonemes_per_utterance: (6, 12),
            duration_frames: (5, 20),
            silence_frames: (3, 8),
            phoneme_targets: random_anchors(&ARPABET, 10.0, seed),
            speaker_offset_scale: 2.0,
            noise_scale: 0.3,
            smoothing: 5,
            acoustic_noise: 0.1,
            acoustic_phoneme_gain: 1.0,
            acoustic_ema_gain: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (usize, usize)| a <= b;
        if self.speakers == 0 || self.utterances_per_speaker == 0 {
            return Err(Error::invalid("synthetic corpus needs at least one speaker and one utterance"));
        }
        if !range_ok(self.phonemes_per_utterance) || self.phonemes_per_utterance.0 == 0 {
            return Err(Error::invalid("phonemes per utterance: need 1 <= min <= max"));
        }
        if !range_ok(self.duration_frames) || self.duration_frames.0 == 0 {
            return Err(Error::invalid("phoneme durations: need 1 <= min <= max"));
        }
        if !range_ok(self.silence_frames) {
            return Err(Error::invalid("silence frames: need min <= max"));
        }
        if self.smoothing == 0 {
            return Err(Error::invalid("smoothing width must be at least 1"));
        }
        if self.phoneme_targets.is_empty() {
            return Err(Error::invalid("no phoneme targets"));
        }
        let inventory = PhonemeInventory::arpabet();
        for (label, anchor) in &self.phoneme_targets {
            if inventory.index(label).is_none() {
                return Err(Error::invalid(format!("phoneme target for unknown label {label}")));
            }
            if anchor.len() != CHANNELS || anchor.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("anchor of {label} must be {CHANNELS} finite values")));
            }
        }
        let scales = [
            self.speaker_offset_scale,
            self.noise_scale,
            self.acoustic_noise,
            self.acoustic_phoneme_gain,
            self.acoustic_ema_gain,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scales and gains must be finite and non-negative"));
        }
        Ok(())
    }

    fn anchor_scale(&self) -> f64 {
        let max = self
            .phoneme_targets
            .values()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }
}

/// Anchors drawn uniformly from `[-scale, scale]` mm for each label.
pub fn random_anchors(labels: &[&str], scale: f64, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let mut r = rng::stream(seed, "anchors");
    labels
        .iter()
        .map(|l| (l.to_string(), (0..CHANNELS).map(|_| r.gen_range(-scale..=scale)).collect()))
        .collect()
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:02}")
}

/// Constant articulator offset of each speaker, mm.
pub fn speaker_offsets(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    (0..spec.speakers)
        .map(|s| {
            let mut r = rng::stream(spec.seed, &format!("speaker-offset/{s}"));
            (0..CHANNELS)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    spec.speaker_offset_scale * z
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticUtterance {
    pub id: String,
    pub speaker: String,
    pub features: Tensor,
    pub alignment: Vec<AlignmentEntry>,
    pub ema: Tensor,
}

struct Renderer {
    phoneme_weights: Vec<f64>,
    ema_weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Renderer {
    fn new(spec: &SyntheticSpec) -> Self {
        let mut r = rng::stream(spec.seed, "acoustic-rendering");
        let mut normal = |n: usize, sd: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    sd * z
                })
                .collect()
        };
        let d = SYNTH_FEATURE_DIM;
        let phoneme_weights = normal(d * ARPABET.len(), spec.acoustic_phoneme_gain);
        let ema_weights = normal(d * CHANNELS, spec.acoustic_ema_gain / (CHANNELS as f64).sqrt());
        let bias = normal(d, 0.1);
        Renderer {
            phoneme_weights,
            ema_weights,
            bias,
        }
    }

    fn render(&self, onehot: &[f64], ema: &[f64], ema_scale: f64) -> Vec<f64> {
        let p = ARPABET.len();
        (0..SYNTH_FEATURE_DIM)
            .map(|k| {
                let mut a = self.bias[k];
                for (j, &v) in onehot.iter().enumerate() {
                    if v != 0.0 {
                        a += self.phoneme_weights[k * p + j] * v;
                    }
                }
                for (c, &v) in ema.iter().enumerate() {
                    a += self.ema_weights[k * CHANNELS + c] * v / ema_scale;
                }
                a.tanh()
            })
            .collect()
    }
}

/// Centred moving average with edge replication.
fn smooth(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    if width <= 1 {
        return rows.to_vec();
    }
    let n = rows.len() as isize;
    let lo = (width / 2) as isize;
    let hi = ((width - 1) / 2) as isize;
    (0..n)
        .map(|i| {
            let mut acc = vec![0.0; CHANNELS];
            for k in i - lo..=i + hi {
                let r = &rows[k.clamp(0, n - 1) as usize];
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / width as f64).collect()
        })
        .collect()
}

/// Builds the corpus in memory, speaker-major.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Vec<SyntheticUtterance>> {
    spec.validate()?;
    let labels: Vec<&String> = spec.phoneme_targets.keys().collect();
    let offsets = speaker_offsets(spec);
    let renderer = Renderer::new(spec);
    let inventory = PhonemeInventory::arpabet();
    let ema_scale = spec.anchor_scale();
    let noise = Normal::new(0.0, spec.noise_scale).map_err(|e| Error::invalid(e.to_string()))?;
    let acoustic = Normal::new(0.0, spec.acoustic_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(spec.speakers * spec.utterances_per_speaker);
    for s in 0..spec.speakers {
        let speaker = speaker_id(s);
        for u in 0..spec.utterances_per_speaker {
            let id = format!("{speaker}_utt{u:03}");
            let mut r = rng::stream(spec.seed, &format!("utterance/{id}"));
            let mut alignment = Vec::new();
            let mut anchors: Vec<Vec<f64>> = Vec::new();
            let mut frame = 0usize;
            let mut push = |label: &str, frames: usize, anchor: &[f64], alignment: &mut Vec<AlignmentEntry>| {
                if frames == 0 {
                    return;
                }
                alignment.push(AlignmentEntry::new(
                    frame as f64 * SYNTH_HOP_SECONDS,
                    (frame + frames) as f64 * SYNTH_HOP_SECONDS,
                    label,
                ));
                anchors.extend(std::iter::repeat(anchor.to_vec()).take(frames));
                frame += frames;
            };
            let rest = vec![0.0; CHANNELS];
            let lead = r.gen_range(spec.silence_frames.0..=spec.silence_frames.1);
            push("sil", lead, &rest, &mut alignment);
            let count = r.gen_range(spec.phonemes_per_utterance.0..=spec.phonemes_per_utterance.1);
            let mut prev: Option<usize> = None;
            for _ in 0..count {
                let mut k = r.gen_range(0..labels.len());
                if labels.len() > 1 {
                    while Some(k) == prev {
                        k = r.gen_range(0..labels.len());
                    }
                }
                prev = Some(k);
                let dur = r.gen_range(spec.duration_frames.0..=spec.duration_frames.1);
                push(labels[k], dur, &spec.phoneme_targets[labels[k]], &mut alignment);
            }
            let trail = r.gen_range(spec.silence_frames.0..=spec.silence_frames.1);
            push("sil", trail, &rest, &mut alignment);

            let frames = anchors.len();
            let smoothed = smooth(&anchors, spec.smoothing);
            let mut ema = Vec::with_capacity(frames * CHANNELS);
            for row in &smoothed {
                for (c, v) in row.iter().enumerate() {
                    let n = if spec.noise_scale > 0.0 { noise.sample(&mut r) } else { 0.0 };
                    ema.push(v + offsets[s][c] + n);
                }
            }
            let ema = Tensor::new([frames, CHANNELS], ema)?;
            let onehot = encode_phonemes(&alignment, frames, SYNTH_HOP_SECONDS, &inventory)?;
            let mut feats = Vec::with_capacity(frames * SYNTH_FEATURE_DIM);
            for i in 0..frames {
                for v in renderer.render(onehot.row(i), ema.row(i), ema_scale) {
                    let n = if spec.acoustic_noise > 0.0 { acoustic.sample(&mut r) } else { 0.0 };
                    feats.push(v + n);
                }
            }
            let features = Tensor::new([frames, SYNTH_FEATURE_DIM], feats)?;
            out.push(SyntheticUtterance {
                id,
                speaker: speaker.clone(),
                features,
                alignment,
                ema,
            });
        }
    }
    Ok(out)
}

impl SyntheticUtterance {
    pub fn to_sample(&self) -> Result<UtteranceSample> {
        let frames = self.features.rows();
        let phonemes = encode_phonemes(&self.alignment, frames, SYNTH_HOP_SECONDS, &PhonemeInventory::arpabet())?;
        UtteranceSample::new(
            self.id.clone(),
            self.speaker.clone(),
            self.features.clone(),
            phonemes,
            self.ema.clone(),
        )
    }

    /// EMA track sampled at the frame centres.
    pub fn ema_track(&self) -> Result<EmaTrack> {
        EmaTrack::uniform(1.0 / SYNTH_HOP_SECONDS, 0.5 * SYNTH_HOP_SECONDS, self.ema.clone())
    }
}

pub fn synthetic_feature_spec() -> FeatureSpec {
    FeatureSpec::Precomputed {
        dim: SYNTH_FEATURE_DIM,
        hop_seconds: SYNTH_HOP_SECONDS,
        source: "synthetic".into(),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the corpus under `dir` and returns the manifest path.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<PathBuf> {
    let utterances = synthesize(spec)?;
    let utt_dir = dir.join("utterances");
    std::fs::create_dir_all(&utt_dir).map_err(|e| Error::io(&utt_dir, e))?;
    let mut rows = Vec::with_capacity(utterances.len());
    for u in &utterances {
        let rel = |ext: &str| PathBuf::from("utterances").join(format!("{}.{ext}", u.id));
        let row = ManifestRow {
            utterance_id: u.id.clone(),
            speaker_id: u.speaker.clone(),
            features: rel("features.csv"),
            alignment: rel("lab"),
            ema: rel("ema.csv"),
        };
        write(&dir.join(&row.features), &format_matrix_csv(&u.features, "f"))?;
        write(&dir.join(&row.alignment), &format_alignment(&u.alignment))?;
        write(&dir.join(&row.ema), &format_ema_csv(&u.ema_track()?))?;
        rows.push(row);
    }
    let info = CorpusInfo {
        speakers: (0..spec.speakers).map(speaker_id).collect(),
        features: synthetic_feature_spec(),
    };
    write(&dir.join(CORPUS_FILE), &to_json(&info))?;
    write(&dir.join(SPEC_FILE), &to_json(spec))?;
    let manifest = dir.join(MANIFEST_FILE);
    write(&manifest, &format_manifest(&rows))?;
    Ok(manifest)
}
