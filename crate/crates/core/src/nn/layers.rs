use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore, Partition, Session};
use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Tanh,
    Relu,
}

/// Fully-connected layer applied per frame: `activation(x V^T + c)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), partition, &[out_dim, in_dim], in_dim, seed);
        let bias = store.add_uniform(format!("{name}.bias"), partition, &[out_dim], in_dim, seed);
        Dense {
            in_dim,
            out_dim,
            activation,
            weight,
            bias,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x);
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(Error::Shape {
                op: "dense",
                lhs: shape.to_vec(),
                rhs: vec![self.out_dim, self.in_dim],
            });
        }
        let steps = shape[0];
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let wt = s.tape.transpose(w)?;
        let y = s.tape.matmul(x, wt)?;
        let bb = s.tape.broadcast_rows(b, steps)?;
        let y = s.tape.add(y, bb)?;
        Ok(match self.activation {
            Activation::None => y,
            Activation::Tanh => s.tape.tanh(y),
            Activation::Relu => s.tape.relu(y),
        })
    }
}

/// One 1-D convolution: `y_j = b_j + sum_k W_jk * x_k` with zero "same"
/// padding, so the time axis keeps its length.
#[derive(Clone, Debug)]
pub struct Conv1dLayer {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Conv1dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if kernel_size % 2 == 0 {
            return Err(Error::invalid(format!("conv kernel size {kernel_size} must be odd")));
        }
        let fan_in = in_channels * kernel_size;
        let weight = store.add_uniform(
            format!("{name}.weight"),
            partition,
            &[out_channels, in_channels, kernel_size],
            fan_in,
            seed,
        );
        let bias = store.add_uniform(format!("{name}.bias"), partition, &[out_channels], fan_in, seed);
        Ok(Conv1dLayer {
            kernel_size,
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let steps = s.tape.shape(x).first().copied().unwrap_or(0);
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let y = s.tape.conv1d(x, w)?;
        let bb = s.tape.broadcast_rows(b, steps)?;
        s.tape.add(y, bb)
    }
}

/// Parallel bank of convolutions with different kernel sizes whose outputs
/// are concatenated along the feature axis in ascending kernel order.
#[derive(Clone, Debug)]
pub struct ConvBank {
    branches: Vec<Conv1dLayer>,
}

impl ConvBank {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        in_channels: usize,
        channels_per_branch: usize,
        kernel_sizes: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if kernel_sizes.is_empty() {
            return Err(Error::invalid("conv bank needs at least one kernel size"));
        }
        let mut sizes = kernel_sizes.to_vec();
        sizes.sort_unstable();
        let branches = sizes
            .iter()
            .map(|&k| {
                Conv1dLayer::new(
                    store,
                    &format!("{name}.k{k}"),
                    partition,
                    in_channels,
                    channels_per_branch,
                    k,
                    seed,
                )
            })
            .collect::<Result<_>>()?;
        Ok(ConvBank { branches })
    }

    pub fn branches(&self) -> &[Conv1dLayer] {
        &self.branches
    }

    pub fn out_dim(&self) -> usize {
        self.branches.iter().map(|b| b.out_channels).sum()
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        if s.tape.shape(x).first().copied().unwrap_or(0) == 0 {
            return Err(Error::invalid("conv bank: input has no frames"));
        }
        let outs = self
            .branches
            .iter()
            .map(|b| b.forward(s, x))
            .collect::<Result<Vec<_>>>()?;
        s.tape.concat(&outs, 1)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-frame normalization followed by learned gain and offset.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub dim: usize,
    pub eps: f64,
    gain: ParamId,
    offset: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, partition: Partition, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), partition, Tensor::filled([dim], 1.0));
        let offset = store.add(format!("{name}.offset"), partition, Tensor::zeros([dim]));
        LayerNorm {
            dim,
            eps: LAYER_NORM_EPS,
            gain,
            offset,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: shape,
                rhs: vec![self.dim],
            });
        }
        let g = s.param(self.gain);
        let o = s.param(self.offset);
        let n = s.tape.layer_norm(x, self.eps)?;
        let gb = s.tape.broadcast_rows(g, shape[0])?;
        let ob = s.tape.broadcast_rows(o, shape[0])?;
        let y = s.tape.mul(n, gb)?;
        s.tape.add(y, ob)
    }
}
