use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::net::SpnModel;
use crate::nn::{Partition, TrainableSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Phoneme stream alone.
    S1,
    /// Pretrained phoneme stream, frozen; everything else trains.
    S2,
    /// Joint training of every partition.
    S3,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(ScenarioId::S1),
            "S2" => Ok(ScenarioId::S2),
            "S3" => Ok(ScenarioId::S3),
            _ => Err(Error::invalid(format!("unknown scenario {s:?}; expected S1, S2 or S3"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    /// Checkpoint supplying the phoneme stream (S2 only).
    pub pretrained: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(id: ScenarioId) -> Self {
        ScenarioConfig { id, pretrained: None }
    }

    pub fn with_pretrained(id: ScenarioId, path: impl Into<PathBuf>) -> Self {
        ScenarioConfig {
            id,
            pretrained: Some(path.into()),
        }
    }
}

/// What a scenario trains and which loss terms it uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioPlan {
    pub id: ScenarioId,
    pub trainable: TrainableSet,
    /// Whether the acoustic path runs at all.
    pub uses_speech: bool,
    pub spn_term: bool,
    pub phoneme_term: bool,
}

impl ScenarioPlan {
    /// Train/freeze map for `id` on `model`; does not load anything.
    pub fn for_model(id: ScenarioId, model: &SpnModel) -> Result<Self> {
        let has_phoneme = model.has_phoneme_stream();
        if !has_phoneme && id != ScenarioId::S3 {
            return Err(Error::invalid(format!(
                "scenario {id} needs a phoneme stream, which this model lacks"
            )));
        }
        Ok(match id {
            ScenarioId::S1 => ScenarioPlan {
                id,
                trainable: TrainableSet::only(&[Partition::PhonemeStream]),
                uses_speech: false,
                spn_term: false,
                phoneme_term: true,
            },
            ScenarioId::S2 => ScenarioPlan {
                id,
                trainable: TrainableSet::only(&[Partition::SpeechStream, Partition::Fusion, Partition::Inversion]),
                uses_speech: true,
                spn_term: true,
                phoneme_term: false,
            },
            ScenarioId::S3 => {
                let mut parts = vec![Partition::SpeechStream, Partition::Fusion, Partition::Inversion];
                if has_phoneme {
                    parts.push(Partition::PhonemeStream);
                }
                ScenarioPlan {
                    id,
                    trainable: TrainableSet::only(&parts),
                    uses_speech: true,
                    spn_term: true,
                    phoneme_term: has_phoneme,
                }
            }
        })
    }
}

/// Copies the phoneme stream and target normalizer of `pretrained` into
/// `model`, as S2 requires.
pub fn load_pretrained_phoneme_stream(model: &mut SpnModel, pretrained: &SpnModel) -> Result<()> {
    if !pretrained.has_phoneme_stream() {
        return Err(Error::invalid("pretrained model has no phoneme stream"));
    }
    model
        .store_mut()
        .copy_partition_from(pretrained.store(), Partition::PhonemeStream)?;
    model.normalizer = pretrained.normalizer.clone();
    Ok(())
}

/// Resolves `config` against `model`, loading the pretrained phoneme stream
/// for S2.
pub fn apply_scenario(config: &ScenarioConfig, model: &mut SpnModel) -> Result<ScenarioPlan> {
    let plan = ScenarioPlan::for_model(config.id, model)?;
    match (config.id, &config.pretrained) {
        (ScenarioId::S2, None) => Err(Error::invalid("scenario S2 requires a pretrained checkpoint")),
        (ScenarioId::S2, Some(path)) => {
            let ckpt = crate::data::load_checkpoint(path, None)?;
            let pretrained = ckpt.into_model()?;
            load_pretrained_phoneme_stream(model, &pretrained)?;
            Ok(plan)
        }
        (_, Some(_)) => Err(Error::invalid(format!(
            "scenario {} does not take a pretrained checkpoint",
            config.id
        ))),
        (_, None) => Ok(plan),
    }
}
