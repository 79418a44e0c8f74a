//! Central finite-difference checks against the tape's analytic gradients.
//!
//! The numeric side only ever calls the forward closure, so it shares no code
//! path with the backward rules it audits.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub worst_entry: usize,
}

impl ParamCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Error measure used by every check: absolute difference scaled by the
/// larger magnitude, floored so that two near-zero derivatives compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

fn eval_loss<S, F>(store: &ParamStore<S>, loss_fn: &F) -> Result<f64>
where
    S: Scalar,
    F: for<'a> Fn(&mut Tape<'a, S>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let loss = loss_fn(&mut tape)?;
    Ok(tape.value(loss)[0].to_f64_lossy())
}

/// Compares analytic and central-difference gradients for each parameter in
/// `which` (all parameters when `None`). Unreached parameters are compared
/// against zero.
pub fn check_params<S, F>(
    store: &mut ParamStore<S>,
    which: Option<&[ParamId]>,
    step: f64,
    loss_fn: F,
) -> Result<Vec<ParamCheck>>
where
    S: Scalar,
    F: for<'a> Fn(&mut Tape<'a, S>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(&*store);
        let loss = loss_fn(&mut tape)?;
        let grads = tape.backward(loss)?;
        store
            .ids()
            .map(|id| grads.param_dense(id, store))
            .collect::<Vec<_>>()
    };
    let ids: Vec<ParamId> = match which {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let h = S::of(step);
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.get(id).len();
        let mut check = ParamCheck {
            name: store.name(id).to_string(),
            entries: n,
            max_rel_err: 0.0,
            worst_entry: 0,
        };
        for i in 0..n {
            let orig = store.get(id).values()[i];
            store.get_mut(id).values_mut()[i] = orig + h;
            let plus = eval_loss(store, &loss_fn)?;
            store.get_mut(id).values_mut()[i] = orig - h;
            let minus = eval_loss(store, &loss_fn)?;
            store.get_mut(id).values_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[id.index()]
                .as_ref()
                .map_or(0.0, |g| g[i].to_f64_lossy());
            let err = relative_error(a, numeric);
            if err > check.max_rel_err || err.is_nan() {
                check.max_rel_err = err;
                check.worst_entry = i;
            }
        }
        report.push(check);
    }
    Ok(report)
}
