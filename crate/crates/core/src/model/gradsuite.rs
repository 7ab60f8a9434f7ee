//! The gradient suite: every tape primitive, every layer type, and the whole
//! network, each compared against central finite differences.

use rand::Rng;
use serde::Serialize;

use crate::autodiff::{grad_check_many, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{joint_loss, LossWeights, Reduction, SpnConfig, SpnModel};
use crate::nn::{
    all_coords, param_grad_check, param_grad_check_with, Activation, AttentionStack, Blstm, ConvBank, Coord, Dense, LayerNorm, ParamStore,
    Partition, Session, Stencil, TrainableSet,
};
use crate::rng::{seeded, stream, uniform_tensor};

pub const PRIMITIVE_STEP: f64 = 1e-6;
pub const LAYER_STEP: f64 = 1e-5;
/// Whole-network checks use the five-point stencil: with three points no
/// single step keeps both truncation and rounding below tolerance for every
/// coordinate.
pub const END_TO_END_STEP: f64 = 1e-3;
/// Sampled whole-network coordinates must have a derivative at least this
/// many times the rounding resolution `eps * |loss| / step` of the central
/// difference; below that the relative error measures rounding, not the
/// gradient.
pub const RESOLUTION_MARGIN: f64 = 1e5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-5;
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub group: &'static str,
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Candidate coordinates passed over for being below resolution.
    pub rejected: usize,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

type Prim = fn(&mut Tape, &[Var]) -> Result<Var>;

fn primitives() -> Vec<(&'static str, Vec<Vec<usize>>, Prim)> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![3, 4], vec![3, 4]], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![3, 4], vec![3, 4]], |t, v| t.mul(v[0], v[1])),
        ("scale", vec![vec![5]], |t, v| Ok(t.scale(v[0], -1.7))),
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| t.matmul(v[0], v[1])),
        ("conv1d", vec![vec![6, 3], vec![2, 3, 5]], |t, v| t.conv1d(v[0], v[1])),
        ("sigmoid", vec![vec![7]], |t, v| Ok(t.sigmoid(v[0]))),
        ("tanh", vec![vec![7]], |t, v| Ok(t.tanh(v[0]))),
        ("softmax", vec![vec![3, 5]], |t, v| t.softmax(v[0])),
        ("sum", vec![vec![2, 3]], |t, v| Ok(t.sum(v[0]))),
        ("mean", vec![vec![2, 3]], |t, v| t.mean(v[0])),
        ("square", vec![vec![6]], |t, v| Ok(t.square(v[0]))),
        ("concat", vec![vec![3, 2], vec![3, 4]], |t, v| t.concat(v, 1)),
        ("slice", vec![vec![3, 6]], |t, v| t.slice(v[0], 1, 2, 5)),
        ("transpose", vec![vec![3, 5]], |t, v| t.transpose(v[0])),
        ("broadcast_rows", vec![vec![4]], |t, v| t.broadcast_rows(v[0], 3)),
        ("index_rows", vec![vec![4, 3]], |t, v| t.index_rows(v[0], &[3, 0, 0, 2])),
        ("layer_norm", vec![vec![3, 6]], |t, v| t.layer_norm(v[0], 1e-5)),
    ]
}

/// `sum(y * R)` with a fixed random `R`, so every output element matters.
fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let r = tape.constant(uniform_tensor(&mut seeded(seed), &shape, -1.0, 1.0));
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn check_primitives(seed: u64, points: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = stream(seed, "gradsuite/primitives");
    let mut out = Vec::new();
    for (name, shapes, op) in primitives() {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for point in 0..points {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| uniform_tensor(&mut rng, s, -2.0, 2.0)).collect();
            checked += inputs.iter().map(Tensor::numel).sum::<usize>();
            let report = grad_check_many(
                |tape, vars| {
                    let y = op(tape, vars)?;
                    probe(tape, y, seed ^ point)
                },
                &inputs,
                PRIMITIVE_STEP,
            )?;
            worst = worst.max(report.max_error());
        }
        out.push(SuiteEntry {
            group: "primitive",
            name: name.to_string(),
            checked,
            max_rel_error: worst,
            tolerance: PRIMITIVE_TOLERANCE,
            rejected: 0,
        });
    }
    Ok(out)
}

fn check_layer<F>(name: &str, store: &ParamStore, shape: [usize; 2], seed: u64, points: u64, f: F) -> Result<SuiteEntry>
where
    F: Fn(&mut Session, Var) -> Result<Var>,
{
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for point in 0..points {
        let x = uniform_tensor(&mut stream(seed, &format!("gradsuite/{name}/{point}")), &shape, -1.0, 1.0);
        let coords = all_coords(store, std::slice::from_ref(&x));
        checked += coords.len();
        let report = param_grad_check(
            store,
            &[x],
            |s, v| {
                let y = f(s, v[0])?;
                probe(&mut s.tape, y, seed ^ point)
            },
            &coords,
            LAYER_STEP,
        )?;
        worst = worst.max(report.max_error());
    }
    Ok(SuiteEntry {
        group: "layer",
        name: name.to_string(),
        checked,
        max_rel_error: worst,
        tolerance: LAYER_TOLERANCE,
        rejected: 0,
    })
}

fn check_layers(seed: u64, points: u64) -> Result<Vec<SuiteEntry>> {
    let p = Partition::SpeechStream;
    let mut out = Vec::new();

    let mut store = ParamStore::new();
    let bank = ConvBank::new(&mut store, "bank", p, 6, 2, &[1, 3, 5, 7, 9], seed)?;
    out.push(check_layer("conv_bank", &store, [5, 6], seed, points, |s, x| bank.forward(s, x))?);

    let mut store = ParamStore::new();
    let stack = AttentionStack::new(&mut store, "attn", p, 2, 8, 2, 4, 4, seed)?;
    out.push(check_layer("attention_stack", &store, [4, 8], seed, points, |s, x| {
        Ok(stack.forward(s, x)?.output)
    })?);

    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", p, 5);
    for param in store.iter_mut() {
        for (i, v) in param.value.data_mut().iter_mut().enumerate() {
            *v += 0.1 * i as f64;
        }
    }
    out.push(check_layer("layer_norm", &store, [3, 5], seed, points, |s, x| ln.forward(s, x))?);

    let mut store = ParamStore::new();
    let dense = Dense::new(&mut store, "dense", p, 5, 4, Activation::Tanh, seed);
    out.push(check_layer("dense", &store, [3, 5], seed, points, |s, x| dense.forward(s, x))?);

    let mut store = ParamStore::new();
    let blstm = Blstm::new(&mut store, "blstm", p, 3, 2, seed);
    out.push(check_layer("blstm", &store, [4, 3], seed, points, |s, x| blstm.forward(s, x))?);
    Ok(out)
}

/// Two coordinates drawn uniformly from each of the four partitions.
pub fn sampled_coords(model: &SpnModel, seed: u64) -> Vec<Coord> {
    sampled_coords_where(model, seed, |_| true).0
}

/// Like [`sampled_coords`], redrawing any coordinate `accept` rejects.
/// Returns the coordinates and the number of rejected draws.
pub fn sampled_coords_where(model: &SpnModel, seed: u64, accept: impl Fn(Coord) -> bool) -> (Vec<Coord>, usize) {
    const MAX_DRAWS: usize = 10_000;
    let mut r = stream(seed, "coords");
    let mut coords = Vec::new();
    let mut rejected = 0;
    for part in Partition::ALL {
        let ids: Vec<_> = model
            .store()
            .iter()
            .filter(|(_, p)| p.partition == part)
            .map(|(id, p)| (id, p.value.numel()))
            .collect();
        if ids.is_empty() {
            continue;
        }
        let mut taken = 0;
        for _ in 0..MAX_DRAWS {
            let (id, n) = ids[r.gen_range(0..ids.len())];
            let c = Coord::Param(id, r.gen_range(0..n));
            if accept(c) {
                coords.push(c);
                taken += 1;
                if taken == 2 {
                    break;
                }
            } else {
                rejected += 1;
            }
        }
    }
    (coords, rejected)
}

fn end_to_end_loss(model: &SpnModel) -> impl Fn(&mut Session, &[Var]) -> Result<Var> + '_ {
    move |s, v| {
        let out = model.forward(s, v[0], Some(v[1]))?;
        joint_loss(
            &mut s.tape,
            Some(out.spn_pred),
            out.phoneme_pred,
            v[2],
            LossWeights::default(),
            Reduction::Sum,
        )
    }
}

/// Summed joint loss of the whole network on a random 3-frame utterance
/// with unit-scale targets, as seen in training after normalization.
pub fn check_end_to_end(seed: u64, draws: u64) -> Result<SuiteEntry> {
    let model = SpnModel::new(SpnConfig::desk(), seed)?;
    let mut r = stream(seed, "gradsuite/utterance");
    let frames = 3;
    let mut phonemes = Tensor::zeros([frames, 39]);
    for i in 0..frames {
        let k = r.gen_range(0..39);
        phonemes.data_mut()[i * 39 + k] = 1.0;
    }
    let inputs = [
        uniform_tensor(&mut r, &[frames, 39], -1.0, 1.0),
        phonemes,
        uniform_tensor(&mut r, &[frames, 12], -1.0, 1.0),
    ];
    let f = end_to_end_loss(&model);
    let (loss, grads) = {
        let mut s = Session::new(model.store(), TrainableSet::all());
        let vars: Vec<Var> = inputs.iter().map(|t| s.input(t.clone())).collect();
        let loss = f(&mut s, &vars)?;
        (s.value(loss).item(), s.backward(loss)?)
    };
    let floor = RESOLUTION_MARGIN * f64::EPSILON * loss.abs() / END_TO_END_STEP;
    let resolvable = |c: Coord| match c {
        Coord::Param(id, i) => grads[id.index()].as_ref().is_some_and(|g| g.data()[i].abs() >= floor),
        Coord::Input(..) => false,
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut rejected = 0;
    for draw in 0..draws {
        let (coords, skipped) = sampled_coords_where(&model, seed.wrapping_mul(1000).wrapping_add(draw), resolvable);
        checked += coords.len();
        rejected += skipped;
        let report = param_grad_check_with(model.store(), &inputs, &f, &coords, END_TO_END_STEP, Stencil::FivePoint)?;
        worst = worst.max(report.max_error());
    }
    Ok(SuiteEntry {
        group: "end-to-end",
        name: "spn".into(),
        checked,
        max_rel_error: worst,
        tolerance: END_TO_END_TOLERANCE,
        rejected,
    })
}

/// Runs every check; `points` random evaluation points per primitive and
/// layer, and `points` draws of 8 coordinates for the whole network.
pub fn run_gradient_suite(seed: u64, points: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = check_primitives(seed, points)?;
    out.extend(check_layers(seed, points)?);
    out.push(check_end_to_end(seed, points)?);
    Ok(out)
}
