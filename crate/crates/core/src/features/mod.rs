//! Acoustic features, phoneme one-hots, and EMA targets on a shared frame grid.

mod ema;
mod mfcc;
mod phonemes;

use std::path::Path;

pub use ema::{
    align_ema, format_ema_csv, parse_ema_csv, read_ema_csv, EmaTrack, DURATION_SLACK, EMA_CHANNELS,
    TONGUE_CHANNELS,
};
pub use mfcc::{
    compute_mfcc, dct2, deltas, frame_count, hamming, magnitude_spectrum, mel_filterbank, mfcc_unnormalized,
    normalize_columns, MfccConfig, MIN_SAMPLE_RATE,
};
pub use phonemes::{
    encode_phonemes, format_alignment, is_silence, normalize_label, parse_alignment, read_alignment,
    validate_alignment, AlignmentEntry, PhonemeInventory, ARPABET, SILENCE_LABELS,
};

use crate::error::{Error, Result};

/// Mono 16-bit PCM audio scaled to `[-1, 1)`.
#[derive(Clone, Debug)]
pub struct Audio {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let ctx = || path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::data(ctx(), e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::data(
            ctx(),
            format!(
                "expected 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    if spec.sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::data(
            ctx(),
            format!("sample rate {} Hz is below {MIN_SAMPLE_RATE} Hz; resample first", spec.sample_rate),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::data(ctx(), e.to_string()))?;
    Ok(Audio {
        sample_rate: spec.sample_rate,
        samples,
    })
}

pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let err = |e: hound::Error| Error::data(path.display().to_string(), e.to_string());
    let mut w = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &audio.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(v).map_err(err)?;
    }
    w.finalize().map_err(err)
}

#[cfg(test)]
mod tests;
