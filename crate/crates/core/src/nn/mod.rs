//! Parametric layers and the optimizer.

mod adam;
mod attention;
mod check;
mod layers;
mod lstm;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use attention::{AttentionOutput, AttentionStack, MultiHeadAttention, StackOutput};
pub use check::{all_coords, param_grad_check, param_grad_check_with, Coord, CoordResult, ParamCheckReport, Stencil};
pub use layers::{Activation, Conv1dLayer, ConvBank, Dense, LayerNorm, LAYER_NORM_EPS};
pub use lstm::{Blstm, LstmDirection};
pub use params::{Param, ParamId, ParamStore, Partition, Session, TrainableSet};
