//! Finite-difference audits of every tape primitive and of whole models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{check_params, ParamCheck, DEFAULT_STEP};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::layers::LayerBuilder;
use crate::model::{DialogueModel, Example};

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub case: &'static str,
    pub checks: Vec<ParamCheck>,
}

impl CaseResult {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }
}

/// Values in `[-1, 1]` kept at least 0.1 away from zero so that ReLU and
/// max selections sit far from their kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) { x } else { -x }
        })
        .collect()
}

struct Case {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
}

impl Case {
    fn new(seed: u64) -> Self {
        Case { store: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn param(&mut self, name: &str, shape: &[usize]) -> Result<crate::autodiff::ParamId> {
        let n = shape.iter().product();
        let values = away_from_zero(&mut self.rng, n);
        self.store.register(name, Tensor::new(shape.to_vec(), values)?)
    }
}

/// Reduces any output to a scalar through fixed, unequal weights so that a
/// wrong partial derivative cannot hide behind symmetry.
fn project(tape: &mut Tape<'_, f64>, v: Var) -> Result<Var> {
    let n = tape.value(v).len();
    let shape = tape.shape(v).to_vec();
    let w = tape.constant(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let m = tape.mul(v, w)?;
    Ok(tape.sum(m))
}

type LossFn = Box<dyn for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>>;

fn primitive_cases(seed: u64) -> Result<Vec<(&'static str, Case, LossFn)>> {
    let mut out: Vec<(&'static str, Case, LossFn)> = Vec::new();

    let mut c = Case::new(seed);
    let (a, b) = (c.param("a", &[3, 4])?, c.param("b", &[4, 2])?);
    out.push(("matmul", c, Box::new(move |t| { let (a, b) = (t.param(a), t.param(b)); let y = t.matmul(a, b)?; project(t, y) })));

    let mut c = Case::new(seed + 1);
    let (a, b) = (c.param("x", &[4])?, c.param("W", &[4, 3])?);
    out.push(("matmul_vector", c, Box::new(move |t| { let (a, b) = (t.param(a), t.param(b)); let y = t.matmul(a, b)?; project(t, y) })));

    for (i, (name, rhs)) in [("add_broadcast", &[4usize][..]), ("sub_broadcast", &[1][..]), ("mul_broadcast", &[4][..]), ("mul", &[3, 4][..])]
        .into_iter()
        .enumerate()
    {
        let mut c = Case::new(seed + 2 + i as u64);
        let (a, b) = (c.param("a", &[3, 4])?, c.param("b", rhs)?);
        out.push((name, c, Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let y = match name {
                "add_broadcast" => t.add(a, b)?,
                "sub_broadcast" => t.sub(a, b)?,
                _ => t.mul(a, b)?,
            };
            project(t, y)
        })));
    }

    for (i, name) in ["scale", "sigmoid", "tanh", "relu", "sum"].into_iter().enumerate() {
        let mut c = Case::new(seed + 10 + i as u64);
        let a = c.param("a", &[2, 3])?;
        out.push((name, c, Box::new(move |t| {
            let a = t.param(a);
            let y = match name {
                "scale" => t.scale(a, -1.7),
                "sigmoid" => t.sigmoid(a),
                "tanh" => t.tanh(a),
                "relu" => t.relu(a),
                _ => t.sum(a),
            };
            project(t, y)
        })));
    }

    for (i, axis) in [0usize, 1].into_iter().enumerate() {
        let mut c = Case::new(seed + 20 + i as u64);
        let (a, b) = (c.param("a", &[2, 3])?, c.param("b", &[2, 3])?);
        out.push((if axis == 0 { "concat_rows" } else { "concat_cols" }, c, Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let y = t.concat(&[a, b], axis)?;
            project(t, y)
        })));
    }

    let mut c = Case::new(seed + 30);
    let a = c.param("seq", &[5, 3])?;
    out.push(("max_over_time", c, Box::new(move |t| { let a = t.param(a); let y = t.max_over_time(a)?; project(t, y) })));

    let mut c = Case::new(seed + 31);
    let (s, w, b) = (c.param("seq", &[5, 3])?, c.param("W", &[6, 4])?, c.param("b", &[4])?);
    out.push(("conv1d", c, Box::new(move |t| {
        let (s, w, b) = (t.param(s), t.param(w), t.param(b));
        let y = t.conv1d(s, w, b, 2)?;
        project(t, y)
    })));

    let mut c = Case::new(seed + 32);
    let e = c.param("table", &[6, 3])?;
    out.push(("embed", c, Box::new(move |t| { let y = t.embed(e, &[1, 3, 3, 5], true, true)?; project(t, y) })));

    let mut c = Case::new(seed + 33);
    let a = c.param("seq", &[4, 3])?;
    out.push(("row", c, Box::new(move |t| { let a = t.param(a); let y = t.row(a, 2)?; project(t, y) })));

    let mut c = Case::new(seed + 34);
    let a = c.param("logits", &[5])?;
    out.push(("bce", c, Box::new(move |t| {
        let a = t.param(a);
        let p = t.sigmoid(a);
        t.bce(p, &[1.0, 0.0, 0.0, 1.0, 1.0], 1e-7)
    })));

    let mut c = Case::new(seed + 35);
    let cell = LayerBuilder::new(&mut c.store, &mut ChaCha8Rng::seed_from_u64(seed + 36)).lstm_cell("cell", 3, 4)?;
    let (x, h, cc) = (c.param("x", &[3])?, c.param("h", &[4])?, c.param("c", &[4])?);
    out.push(("lstm_step", c, Box::new(move |t| {
        let (x, h, cc) = (t.param(x), t.param(h), t.param(cc));
        let (h, cc) = cell.step(t, x, h, cc)?;
        let y = t.concat(&[h, cc], 0)?;
        project(t, y)
    })));

    Ok(out)
}

/// Central-difference check of every primitive in double precision.
pub fn primitive_suite(seed: u64) -> Result<Vec<CaseResult>> {
    primitive_cases(seed)?
        .into_iter()
        .map(|(case, mut c, f)| {
            let checks = check_params(&mut c.store, None, DEFAULT_STEP, f)?;
            Ok(CaseResult { case, checks })
        })
        .collect()
}

/// Checks the full training objective of `model` on one example.
pub fn model_check(model: &DialogueModel<f64>, example: &Example, step: f64) -> Result<Vec<ParamCheck>> {
    let mut store = model.params().clone();
    check_params(&mut store, None, step, |t| Ok(model.loss(t, example)?.total))
}
