//! Gated LSTM recurrences and the bidirectional wrapper.
//!
//! Gate layout inside the `4H` pre-activation is `[input, forget, cell, output]`:
//!
//! ```text
//! i = sigmoid(.)  f = sigmoid(.)  g = tanh(.)  o = sigmoid(.)
//! c_t = f * c_{t-1} + i * g
//! s_t = o * tanh(c_t)
//! ```
//!
//! with zero initial state.

use super::params::{ParamId, ParamStore, Partition, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// One direction of an LSTM: `pre_t = x_t U^T + s_{t-1} W^T + b`.
#[derive(Clone, Debug)]
pub struct LstmDirection {
    pub input_dim: usize,
    pub hidden: usize,
    input_weight: ParamId,
    recurrent_weight: ParamId,
    bias: ParamId,
}

impl LstmDirection {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        input_dim: usize,
        hidden: usize,
        seed: u64,
    ) -> Self {
        let gates = 4 * hidden;
        let input_weight =
            store.add_uniform(format!("{name}.input_weight"), partition, &[gates, input_dim], input_dim, seed);
        let recurrent_weight =
            store.add_uniform(format!("{name}.recurrent_weight"), partition, &[gates, hidden], hidden, seed);
        let bias = store.add_uniform(format!("{name}.bias"), partition, &[gates], hidden, seed);
        LstmDirection {
            input_dim,
            hidden,
            input_weight,
            recurrent_weight,
            bias,
        }
    }

    pub fn input_weight(&self) -> ParamId {
        self.input_weight
    }

    pub fn recurrent_weight(&self) -> ParamId {
        self.recurrent_weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    /// Left-to-right pass over `x` (`[T x input_dim]`), returning the stacked
    /// hidden states `[T x hidden]`.
    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim || shape[0] == 0 {
            return Err(Error::Shape {
                op: "lstm",
                lhs: shape,
                rhs: vec![self.input_dim],
            });
        }
        let steps = shape[0];
        let h = self.hidden;
        let u = s.param(self.input_weight);
        let w = s.param(self.recurrent_weight);
        let b = s.param(self.bias);

        let ut = s.tape.transpose(u)?;
        let xu = s.tape.matmul(x, ut)?;
        let bb = s.tape.broadcast_rows(b, steps)?;
        let input_part = s.tape.add(xu, bb)?;
        let wt = s.tape.transpose(w)?;

        let mut state: Option<(Var, Var)> = None;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut pre = s.tape.slice(input_part, 0, t, t + 1)?;
            if let Some((h_prev, _)) = state {
                let rec = s.tape.matmul(h_prev, wt)?;
                pre = s.tape.add(pre, rec)?;
            }
            let act = s.tape.sigmoid(pre);
            let i_gate = s.tape.slice(act, 1, 0, h)?;
            let f_gate = s.tape.slice(act, 1, h, 2 * h)?;
            let o_gate = s.tape.slice(act, 1, 3 * h, 4 * h)?;
            let g_pre = s.tape.slice(pre, 1, 2 * h, 3 * h)?;
            let g = s.tape.tanh(g_pre);
            let mut c = s.tape.mul(i_gate, g)?;
            if let Some((_, c_prev)) = state {
                let keep = s.tape.mul(f_gate, c_prev)?;
                c = s.tape.add(keep, c)?;
            }
            let c_act = s.tape.tanh(c);
            let h_t = s.tape.mul(o_gate, c_act)?;
            outputs.push(h_t);
            state = Some((h_t, c));
        }
        s.tape.concat(&outputs, 0)
    }
}

/// Bidirectional LSTM: frame `i` maps to `[s_i ; s'_i]`, where `s'` is the
/// right-to-left recurrence.
#[derive(Clone, Debug)]
pub struct Blstm {
    pub forward_dir: LstmDirection,
    pub backward_dir: LstmDirection,
}

impl Blstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        partition: Partition,
        input_dim: usize,
        hidden: usize,
        seed: u64,
    ) -> Self {
        Blstm {
            forward_dir: LstmDirection::new(store, &format!("{name}.fwd"), partition, input_dim, hidden, seed),
            backward_dir: LstmDirection::new(store, &format!("{name}.bwd"), partition, input_dim, hidden, seed),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward_dir.hidden
    }

    /// Right-to-left states, aligned to the original frame order.
    pub fn backward_states(&self, s: &mut Session, x: Var) -> Result<Var> {
        let rev = s.tape.reverse_rows(x)?;
        let states = self.backward_dir.forward(s, rev)?;
        s.tape.reverse_rows(states)
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let fwd = self.forward_dir.forward(s, x)?;
        let bwd = self.backward_states(s, x)?;
        s.tape.concat(&[fwd, bwd], 1)
    }
}
