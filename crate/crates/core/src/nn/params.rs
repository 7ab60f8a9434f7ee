use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Sub-network a parameter belongs to; the unit of freezing and
/// checkpoint tagging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partition {
    SpeechStream,
    Fusion,
    PhonemeStream,
    Inversion,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::SpeechStream,
        Partition::Fusion,
        Partition::PhonemeStream,
        Partition::Inversion,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Partition::SpeechStream => 0,
            Partition::Fusion => 1,
            Partition::PhonemeStream => 2,
            Partition::Inversion => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Partition::SpeechStream => "speech_stream",
            Partition::Fusion => "fusion",
            Partition::PhonemeStream => "phoneme_stream",
            Partition::Inversion => "inversion",
        };
        f.write_str(s)
    }
}

/// Set of partitions that receive gradient updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableSet([bool; 4]);

impl TrainableSet {
    pub fn all() -> Self {
        TrainableSet([true; 4])
    }

    pub fn none() -> Self {
        TrainableSet([false; 4])
    }

    pub fn only(parts: &[Partition]) -> Self {
        let mut s = Self::none();
        for p in parts {
            s.0[p.tag() as usize] = true;
        }
        s
    }

    pub fn contains(&self, p: Partition) -> bool {
        self.0[p.tag() as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub partition: Partition,
    pub value: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, partition-tagged parameters in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, partition: Partition, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            partition,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Registers a parameter drawn from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// using a random stream keyed by `(seed, name)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        partition: Partition,
        shape: &[usize],
        fan_in: usize,
        seed: u64,
    ) -> ParamId {
        let name = name.into();
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut r = rng::stream(seed, &name);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.gen_range(-bound..bound)).collect();
        let value = Tensor::new(shape.to_vec(), data).expect("length matches shape");
        self.add(name, partition, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count, optionally restricted to one partition.
    pub fn count(&self, partition: Option<Partition>) -> usize {
        self.params
            .iter()
            .filter(|p| partition.map_or(true, |q| p.partition == q))
            .map(|p| p.value.numel())
            .sum()
    }

    /// Sets every parameter to `value`.
    pub fn fill(&mut self, value: f64) {
        for p in &mut self.params {
            p.value.data_mut().fill(value);
        }
    }

    /// Copies values of the named parameters in `other` belonging to
    /// `partition` into this store. Shapes must match.
    pub fn copy_partition_from(&mut self, other: &ParamStore, partition: Partition) -> Result<usize> {
        let mut copied = 0;
        for src in other.params.iter().filter(|p| p.partition == partition) {
            let id = self.find(&src.name).ok_or_else(|| {
                Error::invalid(format!("parameter {} not present in target model", src.name))
            })?;
            let dst = &mut self.params[id.0];
            if dst.partition != partition || dst.value.shape() != src.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter {} differs in partition or shape",
                    src.name
                )));
            }
            dst.value = src.value.clone();
            copied += 1;
        }
        Ok(copied)
    }
}

/// One forward/backward pass: a tape plus lazy binding of parameters onto it.
///
/// Parameters are pushed as leaves the first time a layer asks for them,
/// requiring gradients only if their partition is trainable.
pub struct Session<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    trainable: TrainableSet,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore, trainable: TrainableSet) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            trainable,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let p = self.store.get(id);
        let v = self
            .tape
            .leaf(p.value.clone(), self.trainable.contains(p.partition));
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    /// Runs the reverse sweep and returns per-parameter gradients indexed by
    /// [`ParamId`]. Trainable parameters never touched by the forward pass
    /// get zero gradients; frozen ones get `None`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let mut grads: Gradients = self.tape.backward(loss)?;
        Ok(self
            .store
            .iter()
            .map(|(id, p)| {
                if !self.trainable.contains(p.partition) {
                    return None;
                }
                match self.bound[id.0] {
                    Some(v) => grads.take(v),
                    None => Some(Tensor::zeros(p.value.shape().to_vec())),
                }
            })
            .collect())
    }
}
