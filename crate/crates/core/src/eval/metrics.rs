use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::features::{EMA_CHANNELS, TONGUE_CHANNELS};

/// Which articulator channels are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoredChannels {
    /// T1, T2, T3 in x and z.
    #[default]
    Tongue,
    All,
}

impl ScoredChannels {
    pub fn indices(self) -> Vec<usize> {
        match self {
            ScoredChannels::Tongue => TONGUE_CHANNELS.to_vec(),
            ScoredChannels::All => (0..EMA_CHANNELS.len()).collect(),
        }
    }

    pub fn names(self) -> Vec<&'static str> {
        self.indices().into_iter().map(|i| EMA_CHANNELS[i]).collect()
    }
}

fn check_shapes(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.ndim() != 2 {
        return Err(Error::Shape {
            op,
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseScores {
    pub per_channel: Vec<f64>,
    pub mean: f64,
}

/// Per-channel `sqrt(mean_i (p_ic - y_ic)^2)` and their mean.
pub fn rmse(pred: &Tensor, target: &Tensor) -> Result<RmseScores> {
    check_shapes("rmse", pred, target)?;
    let (t, c) = (pred.rows(), pred.cols());
    if t == 0 || c == 0 {
        return Err(Error::invalid("rmse: empty input"));
    }
    let per_channel: Vec<f64> = (0..c)
        .map(|j| {
            let ss: f64 = (0..t).map(|i| (pred.at(i, j) - target.at(i, j)).powi(2)).sum();
            (ss / t as f64).sqrt()
        })
        .collect();
    let mean = per_channel.iter().sum::<f64>() / c as f64;
    Ok(RmseScores { per_channel, mean })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PccScores {
    /// `None` for channels whose target does not vary.
    pub per_channel: Vec<Option<f64>>,
    /// Mean over the channels that have a value.
    pub mean: f64,
}

/// Per-channel Pearson correlation over frames. Channels with a constant
/// target are left out with a warning; a constant prediction scores 0.
pub fn pcc(pred: &Tensor, target: &Tensor) -> Result<PccScores> {
    check_shapes("pcc", pred, target)?;
    let (t, c) = (pred.rows(), pred.cols());
    if t < 2 {
        return Err(Error::invalid(format!("pcc: need at least 2 frames, got {t}")));
    }
    let n = t as f64;
    let per_channel: Vec<Option<f64>> = (0..c)
        .map(|j| {
            let mp = (0..t).map(|i| pred.at(i, j)).sum::<f64>() / n;
            let my = (0..t).map(|i| target.at(i, j)).sum::<f64>() / n;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for i in 0..t {
                let dx = pred.at(i, j) - mp;
                let dy = target.at(i, j) - my;
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
            if syy == 0.0 {
                log::warn!("pcc: target channel {j} is constant; excluded");
                None
            } else if sxx == 0.0 {
                Some(0.0)
            } else {
                Some(sxy / (sxx.sqrt() * syy.sqrt()))
            }
        })
        .collect();
    let valid: Vec<f64> = per_channel.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::invalid("pcc: every target channel is constant"));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(PccScores { per_channel, mean })
}
