//! Finite-difference checks over layer parameters and inputs.

use super::params::{ParamId, ParamStore, Session, TrainableSet};
use crate::autodiff::{relative_error, Tensor, Var};
use crate::error::{Error, Result};

/// A scalar coordinate: an element of a parameter or of an input tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coord {
    Param(ParamId, usize),
    Input(usize, usize),
}

#[derive(Clone, Debug)]
pub struct CoordResult {
    pub coord: Coord,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ParamCheckReport {
    pub results: Vec<CoordResult>,
}

impl ParamCheckReport {
    pub fn max_error(&self) -> f64 {
        self.results.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordResult> {
        self.results
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

fn loss_value<F>(store: &ParamStore, inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Session, &[Var]) -> Result<Var>,
{
    let mut s = Session::new(store, TrainableSet::none());
    let vars: Vec<Var> = inputs.iter().map(|t| s.tape.constant(t.clone())).collect();
    let loss = f(&mut s, &vars)?;
    let v = s.value(loss);
    if v.numel() != 1 {
        return Err(Error::invalid("gradient check: loss must be scalar"));
    }
    Ok(v.item())
}

/// Every coordinate of every parameter and input.
pub fn all_coords(store: &ParamStore, inputs: &[Tensor]) -> Vec<Coord> {
    let mut coords = Vec::new();
    for (id, p) in store.iter() {
        coords.extend((0..p.value.numel()).map(|i| Coord::Param(id, i)));
    }
    for (k, t) in inputs.iter().enumerate() {
        coords.extend((0..t.numel()).map(|i| Coord::Input(k, i)));
    }
    coords
}

/// Central-difference formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error `O(h^2)`.
    #[default]
    ThreePoint,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`, error `O(h^4)`.
    FivePoint,
}

/// Compares tape gradients of the scalar `f` against central differences at
/// each of `coords`.
pub fn param_grad_check<F>(
    store: &ParamStore,
    inputs: &[Tensor],
    f: F,
    coords: &[Coord],
    step: f64,
) -> Result<ParamCheckReport>
where
    F: Fn(&mut Session, &[Var]) -> Result<Var>,
{
    param_grad_check_with(store, inputs, f, coords, step, Stencil::ThreePoint)
}

pub fn param_grad_check_with<F>(
    store: &ParamStore,
    inputs: &[Tensor],
    f: F,
    coords: &[Coord],
    step: f64,
    stencil: Stencil,
) -> Result<ParamCheckReport>
where
    F: Fn(&mut Session, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::invalid(format!("gradient check: step {step} outside (0, 1e-3]")));
    }
    let (param_grads, input_grads) = {
        let mut s = Session::new(store, TrainableSet::all());
        let vars: Vec<Var> = inputs.iter().map(|t| s.tape.leaf(t.clone(), true)).collect();
        let loss = f(&mut s, &vars)?;
        if s.value(loss).numel() != 1 {
            return Err(Error::invalid("gradient check: loss must be scalar"));
        }
        let mut grads = s.tape.backward(loss)?;
        let input_grads: Vec<Tensor> = vars
            .iter()
            .map(|&v| grads.take(v).expect("input leaf requires grad"))
            .collect();
        (s.backward(loss)?, input_grads)
    };

    let mut work_store = store.clone();
    let mut work_inputs = inputs.to_vec();
    let mut report = ParamCheckReport::default();
    for &coord in coords {
        let (analytic, orig) = match coord {
            Coord::Param(id, i) => (
                param_grads[id.index()].as_ref().expect("all trainable").data()[i],
                store.get(id).value.data()[i],
            ),
            Coord::Input(k, i) => (input_grads[k].data()[i], inputs[k].data()[i]),
        };
        let mut eval_at = |x: f64| -> Result<f64> {
            match coord {
                Coord::Param(id, i) => work_store.get_mut(id).value.data_mut()[i] = x,
                Coord::Input(k, i) => work_inputs[k].data_mut()[i] = x,
            }
            loss_value(&work_store, &work_inputs, &f)
        };
        let offsets: &[(f64, f64)] = match stencil {
            Stencil::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::FivePoint => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
        };
        let mut numeric = 0.0;
        for &(k, w) in offsets {
            numeric += w * eval_at(orig + k * step)?;
        }
        let numeric = numeric / step;
        eval_at(orig)?;
        if !numeric.is_finite() || !analytic.is_finite() {
            let index = match coord {
                Coord::Param(_, i) | Coord::Input(_, i) => i,
            };
            return Err(Error::NonFinite {
                what: "gradient check value",
                index,
            });
        }
        report.results.push(CoordResult {
            coord,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(report)
}
