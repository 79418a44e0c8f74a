use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PROB_EPS: f64 = 1e-7;

/// `-sum_k [y_k ln o_k + (1 - y_k) ln(1 - o_k)]` with `o` clipped to
/// `[eps, 1 - eps]`. The differentiable version is [`Tape::bce`].
///
/// [`Tape::bce`]: crate::autodiff::Tape::bce
pub fn multilabel_xent<S: Scalar>(probs: &[S], targets: &[S], eps: f64) -> Result<S> {
    if probs.len() != targets.len() {
        return Err(Error::Contract(format!(
            "cross-entropy over {} outputs with {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let (eps, one) = (S::of(eps), S::one());
    Ok(probs
        .iter()
        .zip(targets)
        .map(|(&o, &y)| {
            let o = o.max(eps).min(one - eps);
            -(y * o.ln() + (one - y) * (one - o).ln())
        })
        .sum())
}
