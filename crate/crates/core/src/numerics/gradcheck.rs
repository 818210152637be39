use super::{Matrix, Real};
use crate::{Error, Result};

/// Read-only view of one named parameter tensor.
#[derive(Debug)]
pub struct ParamTensor<'a, T> {
    pub name: String,
    pub shape: (usize, usize),
    pub data: &'a [T],
    /// Included in the L2 penalty.
    pub regularized: bool,
    /// Updated by the optimizer and probed by the gradient checker.
    pub trainable: bool,
}

/// A collection of named tensors with a fixed traversal order.
///
/// `tensors` and `tensors_mut` must yield the same tensors in the same order.
pub trait ParamSet<T> {
    fn tensors(&self) -> Vec<ParamTensor<'_, T>>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    /// Called after an optimizer has written new values.
    fn mark_updated(&mut self) {}
}

impl<T: Real> ParamSet<T> for Vec<Matrix<T>> {
    fn tensors(&self) -> Vec<ParamTensor<'_, T>> {
        self.iter()
            .enumerate()
            .map(|(i, m)| ParamTensor {
                name: format!("p{i}"),
                shape: m.shape(),
                data: m.data(),
                regularized: true,
                trainable: true,
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.iter_mut().map(|m| m.data_mut()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport<T> {
    /// Maximum relative error per trainable tensor, in traversal order.
    pub per_param: Vec<(String, T)>,
    pub max_relative_error: T,
    pub worst_param: String,
    pub epsilon: T,
    pub probes: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error<T: Real>(analytic: T, numeric: T) -> T {
    let denom = analytic.abs().max(numeric.abs()).max(T::lit(1e-8));
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` against central differences of `loss_fn` for every
/// scalar of every trainable tensor in `params`.
pub fn finite_diff_check<T, P, F>(
    mut loss_fn: F,
    params: &P,
    analytic: &P,
    epsilon: T,
) -> Result<GradCheckReport<T>>
where
    T: Real,
    P: ParamSet<T> + Clone,
    F: FnMut(&P) -> T,
{
    if !(epsilon > T::zero()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let layout: Vec<(String, usize, bool)> = params
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.len(), t.trainable))
        .collect();
    let grads: Vec<Vec<T>> = analytic.tensors().into_iter().map(|t| t.data.to_vec()).collect();
    if grads.len() != layout.len() || grads.iter().zip(&layout).any(|(g, l)| g.len() != l.1) {
        return Err(Error::Config("analytic gradient layout differs from parameters".into()));
    }

    let mut work = params.clone();
    let two_eps = epsilon + epsilon;
    let mut per_param = Vec::new();
    let mut worst = (T::zero(), String::new());
    let mut probes = 0;

    for (ti, (name, len, trainable)) in layout.iter().enumerate() {
        if !trainable {
            continue;
        }
        let mut tensor_max = T::zero();
        for k in 0..*len {
            let original = work.tensors_mut()[ti][k];
            work.tensors_mut()[ti][k] = original + epsilon;
            let plus = loss_fn(&work);
            work.tensors_mut()[ti][k] = original - epsilon;
            let minus = loss_fn(&work);
            work.tensors_mut()[ti][k] = original;
            probes += 1;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Probe {
                    param: format!("{name}[{k}]"),
                });
            }
            let numeric = (plus - minus) / two_eps;
            let err = relative_error(grads[ti][k], numeric);
            tensor_max = tensor_max.max(err);
        }
        if tensor_max > worst.0 || worst.1.is_empty() {
            worst = (tensor_max, name.clone());
        }
        per_param.push((name.clone(), tensor_max));
    }

    Ok(GradCheckReport {
        per_param,
        max_relative_error: worst.0,
        worst_param: worst.1,
        epsilon,
        probes,
    })
}
