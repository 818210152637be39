use crate::numerics::{ParamSet, Real};
use crate::{Error, Result};

/// Lower clamp applied to probabilities before taking logs.
pub fn prob_clamp<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon())
}

fn check_lengths(probs: usize, labels: usize) -> Result<()> {
    if probs != labels {
        return Err(Error::Shape {
            op: "bce_loss",
            left: (probs, 1),
            right: (labels, 1),
        });
    }
    if probs == 0 {
        return Err(Error::UndefinedMetric("log loss of an empty set".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to `[c, 1 − c]`.
pub fn bce_loss<T: Real>(probs: &[T], labels: &[u8]) -> Result<T> {
    check_lengths(probs.len(), labels.len())?;
    let c = prob_clamp::<T>();
    let hi = T::one() - c;
    let total = probs.iter().zip(labels).fold(T::zero(), |acc, (&p, &y)| {
        let p = p.max(c).min(hi);
        acc - if y == 1 { p.ln() } else { (T::one() - p).ln() }
    });
    Ok(total / T::lit(probs.len() as f64))
}

/// d(bce_loss)/d(logit) per instance: `(ŷ − y)/M`, zero where the clamp is active.
pub fn bce_logit_grad<T: Real>(probs: &[T], labels: &[u8]) -> Result<Vec<T>> {
    check_lengths(probs.len(), labels.len())?;
    let c = prob_clamp::<T>();
    let hi = T::one() - c;
    let m = T::lit(probs.len() as f64);
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < c || p > hi {
                T::zero()
            } else {
                (p - T::lit(f64::from(y))) / m
            }
        })
        .collect())
}

/// `λ·Σ‖W‖²` over the regularized tensors.
pub fn l2_penalty<T: Real, P: ParamSet<T>>(params: &P, lambda: T) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    let total = params
        .tensors()
        .iter()
        .filter(|t| t.regularized)
        .flat_map(|t| t.data.iter())
        .fold(T::zero(), |acc, &w| acc + w * w);
    lambda * total
}

/// Adds `2λ·W` to the gradient of every regularized tensor.
pub fn l2_gradient_into<T: Real, P: ParamSet<T>>(params: &P, lambda: T, grads: &mut P) {
    if lambda == T::zero() {
        return;
    }
    let two_lambda = lambda + lambda;
    for (t, g) in params.tensors().iter().zip(grads.tensors_mut()) {
        if t.regularized {
            for (gv, &w) in g.iter_mut().zip(t.data) {
                *gv += two_lambda * w;
            }
        }
    }
}
