use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Weights of the full-model and phoneme-stream squared-error terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub spn: f64,
    pub phoneme: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { spn: 1.0, phoneme: 1.0 }
    }
}

/// How squared errors over an utterance's frames are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    /// Sum over frames and channels.
    Sum,
    /// Sum over channels, mean over frames.
    #[default]
    FrameMean,
}

fn squared_error(tape: &mut Tape, pred: Var, target: Var, reduction: Reduction) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) || tape.shape(pred).len() != 2 {
        return Err(Error::Shape {
            op: "joint_loss",
            lhs: tape.shape(pred).to_vec(),
            rhs: tape.shape(target).to_vec(),
        });
    }
    let frames = tape.shape(pred)[0];
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d);
    let total = tape.sum(sq);
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::FrameMean => tape.scale(total, 1.0 / frames.max(1) as f64),
    })
}

/// `w_spn * sum_i |spn_i - y_i|^2 + w_phoneme * sum_i |phoneme_i - y_i|^2`.
/// A term is left out when its prediction is absent or its weight is zero.
pub fn joint_loss(
    tape: &mut Tape,
    spn_pred: Option<Var>,
    phoneme_pred: Option<Var>,
    target: Var,
    weights: LossWeights,
    reduction: Reduction,
) -> Result<Var> {
    if !(weights.spn >= 0.0 && weights.phoneme >= 0.0) {
        return Err(Error::invalid(format!(
            "loss weights must be non-negative, got ({}, {})",
            weights.spn, weights.phoneme
        )));
    }
    let mut terms = Vec::with_capacity(2);
    for (pred, w) in [(spn_pred, weights.spn), (phoneme_pred, weights.phoneme)] {
        if let Some(p) = pred {
            let e = squared_error(tape, p, target, reduction)?;
            if w != 0.0 {
                terms.push(if w == 1.0 { e } else { tape.scale(e, w) });
            }
        }
    }
    match terms.as_slice() {
        [] => Err(Error::invalid("joint loss has no active term")),
        [a] => Ok(*a),
        [a, b] => tape.add(*a, *b),
        _ => unreachable!("at most two terms"),
    }
}
