use super::{Matrix, Real};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    let cols = m.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut total = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}

/// Gradient through `y = softmax_rows(x)`: `dx = y ⊙ (dy − rowsum(dy ⊙ y))`.
pub fn softmax_rows_backward<T: Real>(y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    debug_assert_eq!(y.shape(), dy.shape());
    let cols = y.cols();
    let mut dx = Matrix::zeros(y.rows(), cols);
    for r in 0..y.rows() {
        let (yr, dyr) = (y.row(r), dy.row(r));
        let dot = yr.iter().zip(dyr).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for ((o, &yv), &dv) in dx.row_mut(r).iter_mut().zip(yr).zip(dyr) {
            *o = yv * (dv - dot);
        }
    }
    dx
}

#[inline]
fn leaky<T: Real>(x: T, slope: T) -> T {
    if x >= T::zero() {
        x
    } else {
        slope * x
    }
}

/// Derivative of the leaky ReLU at `x` (the right-hand value at 0).
#[inline]
pub fn leaky_relu_grad<T: Real>(x: T, slope: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        slope
    }
}

/// Elementwise `x` for `x ≥ 0`, `slope·x` otherwise. Slope 0 is plain ReLU.
pub fn leaky_relu<T: Real>(m: &Matrix<T>, slope: T) -> Matrix<T> {
    debug_assert!(slope >= T::zero() && slope <= T::one());
    m.map(|x| leaky(x, slope))
}

/// `dy ⊙ leaky'(pre)`.
pub fn leaky_relu_backward<T: Real>(pre: &Matrix<T>, dy: &Matrix<T>, slope: T) -> Matrix<T> {
    debug_assert_eq!(pre.shape(), dy.shape());
    pre.zip_map(dy, "leaky_relu_backward", |x, g| g * leaky_relu_grad(x, slope))
        .expect("shapes checked")
}

/// Logistic function, branching on sign so neither side overflows.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
