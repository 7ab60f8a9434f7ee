use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One utterance on a shared frame grid.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceSample {
    pub id: String,
    pub speaker: String,
    /// `[T x acoustic_dim]`.
    pub features: Tensor,
    /// `[T x phoneme inventory size]` one-hot rows.
    pub phonemes: Tensor,
    /// `[T x 12]` articulator positions, mm.
    pub ema: Tensor,
}

impl UtteranceSample {
    pub fn new(
        id: impl Into<String>,
        speaker: impl Into<String>,
        features: Tensor,
        phonemes: Tensor,
        ema: Tensor,
    ) -> Result<Self> {
        let id = id.into();
        let frames: Vec<usize> = [&features, &phonemes, &ema]
            .iter()
            .map(|t| if t.ndim() == 2 { t.rows() } else { usize::MAX })
            .collect();
        if frames.iter().any(|&f| f != frames[0]) {
            return Err(Error::data(
                id,
                format!(
                    "frame counts differ: features {:?}, phonemes {:?}, ema {:?}",
                    features.shape(),
                    phonemes.shape(),
                    ema.shape()
                ),
            ));
        }
        Ok(UtteranceSample {
            id,
            speaker: speaker.into(),
            features,
            phonemes,
            ema,
        })
    }

    pub fn frames(&self) -> usize {
        self.ema.rows()
    }
}
