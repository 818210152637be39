use crate::numerics::{ParamSet, Real};
use crate::{Error, Result};

/// First and second moment estimates for every tensor of a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<P: ParamSet<T>>(params: &P) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.data.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

/// One bias-corrected Adam update over the trainable tensors, in traversal
/// order. Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Real, P: ParamSet<T>>(params: &mut P, grads: &P, state: &mut AdamState<T>, lr: T) -> Result<()> {
    let views = grads.tensors();
    if views.len() != state.m.len() {
        return Err(Error::Config("optimizer state does not match parameter layout".into()));
    }
    for g in &views {
        if g.trainable && g.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { tensor: g.name.clone() });
        }
    }
    let trainable: Vec<bool> = params.tensors().iter().map(|t| t.trainable).collect();

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);
    for (i, (theta, g)) in params.tensors_mut().into_iter().zip(&views).enumerate() {
        if !trainable[i] {
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..theta.len() {
            let grad = g.data[k];
            m[k] = b1 * m[k] + (T::one() - b1) * grad;
            v[k] = b2 * v[k] + (T::one() - b2) * grad * grad;
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.mark_updated();
    Ok(())
}
