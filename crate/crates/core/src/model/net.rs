use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::model::config::SpnConfig;
use crate::model::normalize::TargetNormalizer;
use crate::nn::{
    Activation, AttentionStack, Blstm, ConvBank, Dense, ParamStore, Partition, Session, TrainableSet,
};

/// Multi-kernel convolutions for local context and self-attention for global
/// context, fused by two dense layers.
#[derive(Clone, Debug)]
pub struct SpeechStreamNet {
    pub conv_bank: ConvBank,
    pub input_projection: Dense,
    pub attention: AttentionStack,
    pub dense1: Dense,
    pub dense2: Dense,
}

pub struct SpeechStreamOutput {
    pub features: Var,
    /// Attention matrices, `[layer][head]`.
    pub attention: Vec<Vec<Var>>,
}

impl SpeechStreamNet {
    fn new(store: &mut ParamStore, cfg: &SpnConfig, seed: u64) -> Result<Self> {
        let p = Partition::SpeechStream;
        let conv_bank = ConvBank::new(
            store,
            "speech.conv",
            p,
            cfg.acoustic_dim,
            cfg.conv_channels,
            &cfg.kernel_sizes,
            seed,
        )?;
        let input_projection = Dense::new(
            store,
            "speech.input_projection",
            p,
            cfg.acoustic_dim,
            cfg.model_dim,
            Activation::None,
            seed,
        );
        let d_v = cfg.model_dim / cfg.heads;
        let attention = AttentionStack::new(
            store,
            "speech.attention",
            p,
            cfg.attention_layers,
            cfg.model_dim,
            cfg.heads,
            cfg.key_dim,
            d_v,
            seed,
        )?;
        let fused = conv_bank.out_dim() + cfg.model_dim;
        let dense1 = Dense::new(store, "speech.dense1", p, fused, cfg.speech_dense, Activation::Tanh, seed);
        let dense2 = Dense::new(
            store,
            "speech.dense2",
            p,
            cfg.speech_dense,
            cfg.speech_dense,
            Activation::Tanh,
            seed,
        );
        Ok(SpeechStreamNet {
            conv_bank,
            input_projection,
            attention,
            dense1,
            dense2,
        })
    }

    pub fn forward(&self, s: &mut Session, mfcc: Var) -> Result<SpeechStreamOutput> {
        let local = self.conv_bank.forward(s, mfcc)?;
        let projected = self.input_projection.forward(s, mfcc)?;
        let global = self.attention.forward(s, projected)?;
        let joined = s.tape.concat(&[local, global.output], 1)?;
        let h = self.dense1.forward(s, joined)?;
        let features = self.dense2.forward(s, h)?;
        Ok(SpeechStreamOutput {
            features,
            attention: global.weights,
        })
    }
}

/// Stacked BLSTMs over phoneme one-hots, regressing articulator positions.
#[derive(Clone, Debug)]
pub struct PhonemeStreamNet {
    pub layers: Vec<Blstm>,
    pub dense: Dense,
    pub output: Dense,
}

impl PhonemeStreamNet {
    fn new(store: &mut ParamStore, cfg: &SpnConfig, seed: u64) -> Self {
        let p = Partition::PhonemeStream;
        let mut input = cfg.phoneme_dim;
        let mut layers = Vec::with_capacity(cfg.phoneme_layers);
        for i in 0..cfg.phoneme_layers {
            let layer = Blstm::new(store, &format!("phoneme.blstm{i}"), p, input, cfg.phoneme_hidden, seed);
            input = layer.out_dim();
            layers.push(layer);
        }
        let dense = Dense::new(store, "phoneme.dense", p, input, cfg.phoneme_dense, Activation::Tanh, seed);
        let output = Dense::new(
            store,
            "phoneme.output",
            p,
            cfg.phoneme_dense,
            cfg.output_dim,
            Activation::None,
            seed,
        );
        PhonemeStreamNet { layers, dense, output }
    }

    pub fn forward(&self, s: &mut Session, phonemes: Var) -> Result<Var> {
        let mut h = phonemes;
        for layer in &self.layers {
            h = layer.forward(s, h)?;
        }
        let h = self.dense.forward(s, h)?;
        self.output.forward(s, h)
    }
}

/// Stand-in fusion network: one BLSTM and a dense layer over speech features.
#[derive(Clone, Debug)]
pub struct FusionNet {
    pub blstm: Blstm,
    pub dense: Dense,
}

impl FusionNet {
    fn new(store: &mut ParamStore, cfg: &SpnConfig, seed: u64) -> Self {
        let p = Partition::Fusion;
        let blstm = Blstm::new(store, "fusion.blstm", p, cfg.speech_dense, cfg.fusion_hidden, seed);
        let dense = Dense::new(
            store,
            "fusion.dense",
            p,
            blstm.out_dim(),
            cfg.fusion_dense,
            Activation::Tanh,
            seed,
        );
        FusionNet { blstm, dense }
    }

    pub fn forward(&self, s: &mut Session, speech: Var) -> Result<Var> {
        let h = self.blstm.forward(s, speech)?;
        self.dense.forward(s, h)
    }
}

/// Stand-in inversion head: one BLSTM over fused speech features, joined
/// with the phoneme-stream estimates when present, and a linear readout.
#[derive(Clone, Debug)]
pub struct InversionNet {
    pub blstm: Blstm,
    pub output: Dense,
}

impl InversionNet {
    fn new(store: &mut ParamStore, cfg: &SpnConfig, seed: u64) -> Self {
        let p = Partition::Inversion;
        let input = cfg.fusion_dense + if cfg.use_phoneme_stream { cfg.output_dim } else { 0 };
        let blstm = Blstm::new(store, "inversion.blstm", p, input, cfg.inversion_hidden, seed);
        let output = Dense::new(
            store,
            "inversion.output",
            p,
            blstm.out_dim(),
            cfg.output_dim,
            Activation::None,
            seed,
        );
        InversionNet { blstm, output }
    }

    pub fn forward(&self, s: &mut Session, fused: Var, phoneme_pred: Option<Var>) -> Result<Var> {
        let x = match phoneme_pred {
            Some(p) => s.tape.concat(&[fused, p], 1)?,
            None => fused,
        };
        let h = self.blstm.forward(s, x)?;
        self.output.forward(s, h)
    }
}

pub struct SpnOutput {
    pub spn_pred: Var,
    /// Absent when the model has no phoneme stream.
    pub phoneme_pred: Option<Var>,
    pub attention: Vec<Vec<Var>>,
}

/// De-normalized predictions in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub spn: Option<Tensor>,
    pub phoneme: Option<Tensor>,
}

/// The full two-stream network and its parameters.
#[derive(Clone, Debug)]
pub struct SpnModel {
    config: SpnConfig,
    store: ParamStore,
    pub speech: SpeechStreamNet,
    pub phoneme: Option<PhonemeStreamNet>,
    pub fusion: FusionNet,
    pub inversion: InversionNet,
    /// Target statistics used during training; predictions are mapped back
    /// through it.
    pub normalizer: Option<TargetNormalizer>,
}

impl SpnModel {
    pub fn new(config: SpnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let speech = SpeechStreamNet::new(&mut store, &config, seed)?;
        let fusion = FusionNet::new(&mut store, &config, seed);
        let phoneme = config
            .use_phoneme_stream
            .then(|| PhonemeStreamNet::new(&mut store, &config, seed));
        let inversion = InversionNet::new(&mut store, &config, seed);
        Ok(SpnModel {
            config,
            store,
            speech,
            phoneme,
            fusion,
            inversion,
            normalizer: None,
        })
    }

    /// Rebuilds the architecture from `config` and adopts `params`, which
    /// must match it name for name, in order, with equal partitions and shapes.
    pub fn from_parts(config: SpnConfig, params: ParamStore, normalizer: Option<TargetNormalizer>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.store.len() {
            return Err(Error::invalid(format!(
                "parameter set has {} entries, architecture needs {}",
                params.len(),
                model.store.len()
            )));
        }
        for ((_, have), (_, want)) in params.iter().zip(model.store.iter()) {
            if have.name != want.name || have.partition != want.partition || have.value.shape() != want.value.shape()
            {
                return Err(Error::invalid(format!(
                    "parameter {} ({}, {:?}) does not fit architecture slot {} ({}, {:?})",
                    have.name,
                    have.partition,
                    have.value.shape(),
                    want.name,
                    want.partition,
                    want.value.shape()
                )));
            }
        }
        model.store = params;
        model.normalizer = normalizer;
        Ok(model)
    }

    pub fn config(&self) -> &SpnConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn has_phoneme_stream(&self) -> bool {
        self.phoneme.is_some()
    }

    fn check_input(&self, s: &Session, x: Var, width: usize, what: &str) -> Result<usize> {
        let shape = s.tape.shape(x);
        if shape.len() != 2 || shape[1] != width {
            return Err(Error::invalid(format!(
                "{what} input must be [T x {width}], got {shape:?}"
            )));
        }
        Ok(shape[0])
    }

    /// Phoneme-stream estimates alone.
    pub fn phoneme_forward(&self, s: &mut Session, phonemes: Var) -> Result<Var> {
        let net = self
            .phoneme
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no phoneme stream"))?;
        self.check_input(s, phonemes, self.config.phoneme_dim, "phoneme")?;
        net.forward(s, phonemes)
    }

    /// Both outputs. `phonemes` is required exactly when the model has a
    /// phoneme stream.
    pub fn forward(&self, s: &mut Session, mfcc: Var, phonemes: Option<Var>) -> Result<SpnOutput> {
        let steps = self.check_input(s, mfcc, self.config.acoustic_dim, "acoustic")?;
        let phoneme_pred = match (&self.phoneme, phonemes) {
            (Some(_), Some(p)) => {
                let t = self.check_input(s, p, self.config.phoneme_dim, "phoneme")?;
                if t != steps {
                    return Err(Error::invalid(format!(
                        "acoustic stream has {steps} frames but phoneme stream has {t}"
                    )));
                }
                Some(self.phoneme_forward(s, p)?)
            }
            (Some(_), None) => return Err(Error::invalid("model needs phoneme input")),
            (None, _) => None,
        };
        let speech = self.speech.forward(s, mfcc)?;
        let fused = self.fusion.forward(s, speech.features)?;
        let spn_pred = self.inversion.forward(s, fused, phoneme_pred)?;
        Ok(SpnOutput {
            spn_pred,
            phoneme_pred,
            attention: speech.attention,
        })
    }

    /// Inference without gradients; outputs are de-normalized when the model
    /// carries a normalizer.
    pub fn predict(&self, mfcc: &Tensor, phonemes: &Tensor) -> Result<Prediction> {
        let mut s = Session::new(&self.store, TrainableSet::none());
        let m = s.input(mfcc.clone());
        let p = s.input(phonemes.clone());
        let out = self.forward(&mut s, m, self.phoneme.is_some().then_some(p))?;
        let finish = |t: &Tensor| -> Result<Tensor> {
            if let Some(i) = t.first_non_finite() {
                return Err(Error::NonFinite {
                    what: "prediction",
                    index: i,
                });
            }
            Ok(match &self.normalizer {
                Some(n) => n.denormalize(t),
                None => t.clone(),
            })
        };
        Ok(Prediction {
            spn: Some(finish(s.value(out.spn_pred))?),
            phoneme: out.phoneme_pred.map(|v| finish(s.value(v))).transpose()?,
        })
    }

    /// Phoneme-stream inference only (no acoustic input needed).
    pub fn predict_phoneme(&self, phonemes: &Tensor) -> Result<Tensor> {
        let mut s = Session::new(&self.store, TrainableSet::none());
        let p = s.input(phonemes.clone());
        let out = self.phoneme_forward(&mut s, p)?;
        let t = s.value(out);
        Ok(match &self.normalizer {
            Some(n) => n.denormalize(t),
            None => t.clone(),
        })
    }
}
