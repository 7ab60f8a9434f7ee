//! EMA trajectories and their alignment to the acoustic frame grid.

use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const EMA_CHANNELS: [&str; 12] = [
    "T1_x", "T1_z", "T2_x", "T2_z", "T3_x", "T3_z", "UL_x", "UL_z", "LL_x", "LL_z", "LI_x", "LI_z",
];

/// Indices of the tongue sensors (T1, T2, T3; x and z).
pub const TONGUE_CHANNELS: [usize; 6] = [0, 1, 2, 3, 4, 5];

/// Allowed difference between track and utterance durations, seconds.
pub const DURATION_SLACK: f64 = 0.05;

const SNAP: f64 = 1e-9;

/// Sampled articulator positions in mm, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaTrack {
    times: Vec<f64>,
    values: Tensor,
}

impl EmaTrack {
    pub fn new(times: Vec<f64>, values: Tensor) -> Result<Self> {
        if values.ndim() != 2 || values.cols() != EMA_CHANNELS.len() {
            return Err(Error::invalid(format!(
                "EMA track needs {} channels, got shape {:?}",
                EMA_CHANNELS.len(),
                values.shape()
            )));
        }
        if times.len() != values.rows() || times.is_empty() {
            return Err(Error::invalid("EMA track: time column length mismatch or empty track"));
        }
        if let Some(i) = values.first_non_finite() {
            return Err(Error::invalid(format!(
                "EMA track: non-finite value at row {} channel {}",
                i / EMA_CHANNELS.len(),
                EMA_CHANNELS[i % EMA_CHANNELS.len()]
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("EMA track: times must be finite and strictly increasing"));
        }
        Ok(EmaTrack { times, values })
    }

    /// Track sampled at `rate` Hz starting at `offset` seconds.
    pub fn uniform(rate: f64, offset: f64, values: Tensor) -> Result<Self> {
        let n = values.shape().first().copied().unwrap_or(0);
        let times = (0..n).map(|i| offset + i as f64 / rate).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean sampling period (seconds); 0 for a single-sample track.
    pub fn period(&self) -> f64 {
        let n = self.times.len();
        if n < 2 {
            0.0
        } else {
            (self.times[n - 1] - self.times[0]) / (n - 1) as f64
        }
    }

    /// Time covered by the track, counting one period for the last sample.
    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1] + self.period()
    }
}

pub fn parse_ema_csv(text: &str) -> Result<EmaTrack> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::invalid(format!("EMA csv header: {e}")))?
        .clone();
    let expected: Vec<&str> = std::iter::once("time_s").chain(EMA_CHANNELS).collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::invalid(format!(
            "EMA csv header must be {}, got {}",
            expected.join(","),
            got.join(",")
        )));
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("EMA csv row {}: {e}", n + 1)))?;
        if rec.len() != expected.len() {
            return Err(Error::invalid(format!("EMA csv row {}: wrong column count", n + 1)));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::invalid(format!("EMA csv row {}: bad number {field:?}", n + 1)))?;
            if j == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let rows = times.len();
    EmaTrack::new(times, Tensor::new([rows, EMA_CHANNELS.len()], data)?)
}

pub fn read_ema_csv(path: &Path) -> Result<EmaTrack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ema_csv(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn format_ema_csv(track: &EmaTrack) -> String {
    let mut out = String::from("time_s");
    for c in EMA_CHANNELS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, t) in track.times.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in track.values.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Linearly interpolates every channel at frame centres `(i + 0.5) * hop`,
/// clamping to the track endpoints outside its time range.
pub fn align_ema(track: &EmaTrack, frames: usize, hop: f64) -> Result<Tensor> {
    let utterance = frames as f64 * hop;
    if (track.end_time() - utterance).abs() > DURATION_SLACK + 1e-9 || track.times[0] > DURATION_SLACK {
        return Err(Error::invalid(format!(
            "EMA track spans [{:.3}, {:.3}] s but the utterance lasts {utterance:.3} s",
            track.times[0],
            track.end_time()
        )));
    }
    let width = EMA_CHANNELS.len();
    let times = &track.times;
    let vals = track.values.data();
    let last = times.len() - 1;
    let mut out = Vec::with_capacity(frames * width);
    for i in 0..frames {
        let t = (i as f64 + 0.5) * hop;
        if t <= times[0] {
            out.extend_from_slice(&vals[..width]);
        } else if t >= times[last] {
            out.extend_from_slice(&vals[last * width..]);
        } else {
            // first index with times[k] > t; k >= 1
            let k = times.partition_point(|&x| x <= t);
            let (t0, t1) = (times[k - 1], times[k]);
            let (r0, r1) = (&vals[(k - 1) * width..k * width], &vals[k * width..(k + 1) * width]);
            // frame centres that coincide with a sample (up to rounding) copy it
            if t - t0 <= SNAP {
                out.extend_from_slice(r0);
            } else if t1 - t <= SNAP {
                out.extend_from_slice(r1);
            } else {
                let w = (t - t0) / (t1 - t0);
                out.extend(r0.iter().zip(r1).map(|(a, b)| if a == b { *a } else { a + (b - a) * w }));
            }
        }
    }
    Tensor::new([frames, width], out)
}
