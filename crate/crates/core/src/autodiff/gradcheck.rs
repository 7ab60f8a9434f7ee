//! Central finite-difference comparison against tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Floor used in the relative-error denominator.
const DENOM_FLOOR: f64 = 1e-12;

/// Relative error between an analytic and a numerical derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Outcome of a multi-input gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error per input tensor.
    pub per_input: Vec<f64>,
    /// `(input, coordinate)` of the overall worst error.
    pub worst: (usize, usize),
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

fn eval_scalar<F>(f: &F, points: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::invalid("grad_check: function must return a scalar"));
    }
    Ok((tape, vars, out))
}

/// Checks the gradient of `f` with respect to every coordinate of every
/// input. Returns the max relative error
/// `|analytic - central| / max(|analytic|, |central|, 1e-12)` per input.
pub fn grad_check_many<F>(f: F, points: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::invalid(format!("grad_check: step {step} outside (0, 1e-3]")));
    }
    let (tape, vars, out) = eval_scalar(&f, points)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite {
            what: "function value",
            index: 0,
        });
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.get(v).expect("leaf requires grad").clone())
        .collect();
    drop(tape);

    let mut per_input = vec![0.0; points.len()];
    let mut worst = (0, 0);
    let mut worst_err = -1.0;
    let mut work: Vec<Tensor> = points.to_vec();
    for (input, a_grad) in analytic.iter().enumerate() {
        if let Some(index) = a_grad.first_non_finite() {
            return Err(Error::NonFinite {
                what: "analytic gradient",
                index,
            });
        }
        for coord in 0..points[input].numel() {
            let orig = points[input].data()[coord];
            work[input].data_mut()[coord] = orig + step;
            let plus = eval_scalar(&f, &work)?;
            let fp = plus.0.value(plus.2).item();
            work[input].data_mut()[coord] = orig - step;
            let minus = eval_scalar(&f, &work)?;
            let fm = minus.0.value(minus.2).item();
            work[input].data_mut()[coord] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite {
                    what: "perturbed function value",
                    index: coord,
                });
            }
            let numeric = (fp - fm) / (2.0 * step);
            let err = relative_error(a_grad.data()[coord], numeric);
            if err > per_input[input] {
                per_input[input] = err;
            }
            if err > worst_err {
                worst_err = err;
                worst = (input, coord);
            }
        }
    }
    Ok(GradCheckReport { per_input, worst })
}

/// Single-input form of [`grad_check_many`]; returns the max relative error.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(point), step)?;
    Ok(report.max_error())
}
