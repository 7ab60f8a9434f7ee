//! MFCC front end: pre-emphasis, Hamming window, magnitude spectrum,
//! triangular mel filterbank, floored log, DCT-II, then first and second
//! order regression deltas and per-utterance mean/variance normalization.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mel_filters: usize,
    pub cepstra: usize,
    pub deltas: bool,
    pub pre_emphasis: f64,
    pub log_floor: f64,
    /// Per-utterance mean/variance normalization of every coefficient.
    pub normalize: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_ms: 25.0,
            hop_ms: 10.0,
            mel_filters: 26,
            cepstra: 13,
            deltas: true,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
            normalize: true,
        }
    }
}

pub const MIN_SAMPLE_RATE: u32 = 8000;

impl MfccConfig {
    pub fn feature_dim(&self) -> usize {
        if self.deltas {
            self.cepstra * 3
        } else {
            self.cepstra
        }
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_ms / 1000.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.window_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::invalid("mfcc: window and hop must be positive"));
        }
        if self.cepstra == 0 || self.cepstra > self.mel_filters {
            return Err(Error::invalid(format!(
                "mfcc: need 0 < cepstra ({}) <= mel filters ({})",
                self.cepstra, self.mel_filters
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("mfcc: log floor must be positive"));
        }
        Ok(())
    }
}

/// `floor((samples - window) / hop) + 1`, or 0 when the signal is shorter
/// than one window.
pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window || hop == 0 {
        0
    } else {
        (samples - window) / hop + 1
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and
/// Nyquist, evaluated at the FFT bin frequencies. Returns `[filters][bins]`.
pub fn mel_filterbank(filters: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let bins = fft_size / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (filters + 1) as f64))
        .collect();
    (0..filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / fft_size as f64;
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II of `x`, first `keep` coefficients.
pub fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..keep)
        .map(|n| {
            let scale = if n == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * n as f64 * (i as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Two-frame regression deltas with edge replication:
/// `d_t = sum_{n=1..2} n (c_{t+n} - c_{t-n}) / (2 sum n^2)`.
pub fn deltas(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    const WIDTH: isize = 2;
    let denom = 2.0 * (1..=WIDTH).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames.len() as isize - 1;
    let at = |t: isize| &frames[t.clamp(0, last) as usize];
    (0..frames.len() as isize)
        .map(|t| {
            let dim = frames[t as usize].len();
            (0..dim)
                .map(|j| {
                    (1..=WIDTH)
                        .map(|n| n as f64 * (at(t + n)[j] - at(t - n)[j]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// Windowed magnitude spectrum of one frame, zero-padded to `fft_size`.
pub fn magnitude_spectrum(frame: &[f64], window: &[f64], fft_size: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..fft_size)
        .map(|i| {
            let v = if i < frame.len() { frame[i] * window[i] } else { 0.0 };
            Complex::new(v, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut buf);
    buf[..fft_size / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Cepstra (and deltas when enabled) before normalization, `[T x dim]`.
pub fn mfcc_unnormalized(signal: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "mfcc: sample rate {sample_rate} Hz below {MIN_SAMPLE_RATE} Hz (resampling is not supported)"
        )));
    }
    let win = cfg.window_samples(sample_rate);
    let hop = cfg.hop_samples(sample_rate);
    let frames = frame_count(signal.len(), win, hop);
    if frames == 0 {
        return Err(Error::invalid(format!(
            "mfcc: signal of {} samples is shorter than one {win}-sample window",
            signal.len()
        )));
    }
    let mut emphasized = Vec::with_capacity(signal.len());
    emphasized.push(signal[0]);
    for n in 1..signal.len() {
        emphasized.push(signal[n] - cfg.pre_emphasis * signal[n - 1]);
    }

    let fft_size = win.next_power_of_two();
    let window = hamming(win);
    let bank = mel_filterbank(cfg.mel_filters, fft_size, sample_rate);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut cepstra = Vec::with_capacity(frames);
    for f in 0..frames {
        let chunk = &emphasized[f * hop..f * hop + win];
        for (i, b) in buf.iter_mut().enumerate() {
            let v = if i < win { chunk[i] * window[i] } else { 0.0 };
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(&buf).map(|(w, c)| w * c.norm()).sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();
        cepstra.push(dct2(&log_mel, cfg.cepstra));
    }
    if !cfg.deltas {
        return Ok(cepstra);
    }
    let d1 = deltas(&cepstra);
    let d2 = deltas(&d1);
    Ok(cepstra
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((mut c, d), dd)| {
            c.extend(d);
            c.extend(dd);
            c
        })
        .collect())
}

/// Per-column mean/variance normalization in place. Constant columns are
/// centred only.
pub fn normalize_columns(rows: &mut [Vec<f64>]) {
    let Some(dim) = rows.first().map(Vec::len) else {
        return;
    };
    let n = rows.len() as f64;
    for j in 0..dim {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in rows.iter_mut() {
            r[j] -= mean;
            if sd > 1e-12 {
                r[j] /= sd;
            }
        }
    }
}

/// Full MFCC pipeline, `[T x feature_dim]`.
pub fn compute_mfcc(signal: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Result<Tensor> {
    let mut rows = mfcc_unnormalized(signal, sample_rate, cfg)?;
    if cfg.normalize {
        normalize_columns(&mut rows);
    }
    Tensor::from_rows(&rows)
}
