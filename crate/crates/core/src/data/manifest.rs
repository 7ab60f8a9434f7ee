//! Corpus manifests.
//!
//! A corpus directory holds `manifest.csv` with header
//! `utterance_id,speaker_id,features,alignment,ema` (paths relative to the
//! manifest's directory) and optionally `corpus.json` declaring the speaker
//! list and how the acoustic features were made. Feature files are either
//! `.wav` (16-bit PCM mono; MFCCs computed on load) or numeric CSV with one
//! header row and one frame per line.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::data::UtteranceSample;
use crate::error::{Error, Result};
use crate::features::{
    align_ema, compute_mfcc, encode_phonemes, read_alignment, read_ema_csv, read_wav, MfccConfig, PhonemeInventory,
};

pub const MANIFEST_HEADER: [&str; 5] = ["utterance_id", "speaker_id", "features", "alignment", "ema"];
pub const CORPUS_FILE: &str = "corpus.json";

/// How the acoustic features of a corpus are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Feature matrices stored as CSV.
    Precomputed { dim: usize, hop_seconds: f64, source: String },
    /// MFCCs computed from `.wav` files.
    Mfcc { config: MfccConfig },
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpec::Precomputed { dim, .. } => *dim,
            FeatureSpec::Mfcc { config } => config.feature_dim(),
        }
    }

    pub fn hop_seconds(&self) -> f64 {
        match self {
            FeatureSpec::Precomputed { hop_seconds, .. } => *hop_seconds,
            FeatureSpec::Mfcc { config } => config.hop_seconds(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("feature spec serializes");
        Sha256::digest(json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub speakers: Vec<String>,
    pub features: FeatureSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub features: PathBuf,
    pub alignment: PathBuf,
    pub ema: PathBuf,
}

/// A loaded corpus in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<UtteranceSample>,
    pub speakers: Vec<String>,
    pub features: FeatureSpec,
    pub root: PathBuf,
}

impl Dataset {
    pub fn feature_hash(&self) -> String {
        self.features.hash()
    }

    /// Speakers that actually have utterances, in declaration order.
    pub fn active_speakers(&self) -> Vec<String> {
        self.speakers
            .iter()
            .filter(|s| self.samples.iter().any(|u| &u.speaker == *s))
            .cloned()
            .collect()
    }
}

/// Parses the manifest CSV; checks the header, row shape and id uniqueness.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::data("manifest", e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::data(
            "manifest",
            format!("header must be {}", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (n, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = rec.map_err(|e| Error::data("manifest", format!("row {}: {e}", n + 1)))?;
        if row.utterance_id.is_empty() || row.speaker_id.is_empty() {
            return Err(Error::data("manifest", format!("row {}: empty utterance or speaker id", n + 1)));
        }
        if !seen.insert(row.utterance_id.clone()) {
            return Err(Error::data(
                "manifest",
                format!("duplicate utterance_id {}", row.utterance_id),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data("manifest", "no utterances"));
    }
    Ok(rows)
}

pub fn format_manifest(rows: &[ManifestRow]) -> String {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.utterance_id,
            r.speaker_id,
            r.features.display(),
            r.alignment.display(),
            r.ema.display()
        ));
    }
    out
}

/// Reads a numeric CSV matrix with one header row.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn parse_matrix_csv(text: &str) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let cols = reader
        .headers()
        .map_err(|e| Error::invalid(format!("matrix csv header: {e}")))?
        .len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("matrix csv row {}: {e}", n + 1)))?;
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::invalid(format!("matrix csv row {}: bad number {field:?}", n + 1)))?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("matrix csv row {}: non-finite value", n + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    Tensor::new([rows, cols], data)
}

/// Writes a matrix as CSV with `prefix_0, prefix_1, ...` headers.
pub fn format_matrix_csv(t: &Tensor, prefix: &str) -> String {
    let cols = t.cols();
    let mut out = (0..cols).map(|j| format!("{prefix}_{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..t.rows() {
        let row: Vec<String> = t.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn infer_features(root: &Path, rows: &[ManifestRow]) -> Result<FeatureSpec> {
    let first = &rows[0];
    let path = root.join(&first.features);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
        Ok(FeatureSpec::Mfcc {
            config: MfccConfig::default(),
        })
    } else {
        let m = read_matrix_csv(&path).map_err(|e| Error::data(first.utterance_id.clone(), e.to_string()))?;
        Ok(FeatureSpec::Precomputed {
            dim: m.cols(),
            hop_seconds: MfccConfig::default().hop_seconds(),
            source: "unspecified".into(),
        })
    }
}

fn load_row(root: &Path, row: &ManifestRow, features: &FeatureSpec, inventory: &PhonemeInventory) -> Result<UtteranceSample> {
    let resolve = |p: &Path| -> Result<PathBuf> {
        let full = root.join(p);
        if !full.is_file() {
            return Err(Error::data(
                row.utterance_id.clone(),
                format!("missing file {}", full.display()),
            ));
        }
        Ok(full)
    };
    let ctx = |e: Error| Error::data(row.utterance_id.clone(), e.to_string());
    let feat_path = resolve(&row.features)?;
    let align_path = resolve(&row.alignment)?;
    let ema_path = resolve(&row.ema)?;
    let acoustic = match features {
        FeatureSpec::Mfcc { config } => {
            let audio = read_wav(&feat_path).map_err(ctx)?;
            compute_mfcc(&audio.samples, audio.sample_rate, config).map_err(ctx)?
        }
        FeatureSpec::Precomputed { .. } => read_matrix_csv(&feat_path).map_err(ctx)?,
    };
    if acoustic.cols() != features.dim() {
        return Err(Error::data(
            row.utterance_id.clone(),
            format!("features have {} columns, corpus declares {}", acoustic.cols(), features.dim()),
        ));
    }
    let frames = acoustic.rows();
    let hop = features.hop_seconds();
    let alignment = read_alignment(&align_path).map_err(ctx)?;
    let phonemes = encode_phonemes(&alignment, frames, hop, inventory).map_err(ctx)?;
    let track = read_ema_csv(&ema_path).map_err(ctx)?;
    let ema = align_ema(&track, frames, hop).map_err(ctx)?;
    UtteranceSample::new(row.utterance_id.clone(), row.speaker_id.clone(), acoustic, phonemes, ema)
}

/// Loads every utterance of a manifest, in file order.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_manifest(&text).map_err(|e| match e {
        Error::Data { message, .. } => Error::data(path.display().to_string(), message),
        other => other,
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let corpus_path = root.join(CORPUS_FILE);
    let info = if corpus_path.is_file() {
        let raw = std::fs::read_to_string(&corpus_path).map_err(|e| Error::io(&corpus_path, e))?;
        let info: CorpusInfo = serde_json::from_str(&raw)
            .map_err(|e| Error::data(corpus_path.display().to_string(), e.to_string()))?;
        if let Some(r) = rows.iter().find(|r| !info.speakers.contains(&r.speaker_id)) {
            return Err(Error::data(
                r.utterance_id.clone(),
                format!("speaker {} is not declared in {CORPUS_FILE}", r.speaker_id),
            ));
        }
        info
    } else {
        let mut speakers: Vec<String> = Vec::new();
        for r in &rows {
            if !speakers.contains(&r.speaker_id) {
                speakers.push(r.speaker_id.clone());
            }
        }
        CorpusInfo {
            speakers,
            features: infer_features(&root, &rows)?,
        }
    };
    let inventory = PhonemeInventory::arpabet();
    let samples = rows
        .iter()
        .map(|r| load_row(&root, r, &info.features, &inventory))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        speakers: info.speakers,
        features: info.features,
        root,
    })
}
