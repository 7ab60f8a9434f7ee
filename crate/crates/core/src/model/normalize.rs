use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Per-channel z-scoring of articulator targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetNormalizer {
    /// Pools every frame of every matrix. Channels with (near) zero spread
    /// get unit scale.
    pub fn fit<'a>(targets: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        let mut seen = Vec::new();
        for t in targets {
            if sum.is_empty() {
                sum = vec![0.0; t.cols()];
                sq = vec![0.0; t.cols()];
            } else if t.cols() != sum.len() {
                return Err(Error::invalid("normalizer: channel count differs between utterances"));
            }
            seen.push(t);
            for i in 0..t.rows() {
                for (j, v) in t.row(i).iter().enumerate() {
                    sum[j] += v;
                }
            }
            n += t.rows();
        }
        if n == 0 {
            return Err(Error::invalid("normalizer: no frames"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for t in seen {
            for i in 0..t.rows() {
                for (j, v) in t.row(i).iter().enumerate() {
                    sq[j] += (v - mean[j]) * (v - mean[j]);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(TargetNormalizer { mean, std })
    }

    pub fn normalize(&self, t: &Tensor) -> Tensor {
        self.map(t, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, t: &Tensor) -> Tensor {
        self.map(t, |v, m, s| v * s + m)
    }

    fn map(&self, t: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
        let c = self.mean.len();
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| f(v, self.mean[k % c], self.std[k % c]))
            .collect();
        Tensor::new(t.shape().to_vec(), data).expect("shape unchanged")
    }
}
