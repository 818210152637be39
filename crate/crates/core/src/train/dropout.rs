use rand::Rng;

use crate::model::Mode;
use crate::numerics::{Matrix, Real};

/// Inverted dropout. In train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1 − rate)`; the mask holds those
/// factors. `None` means the identity (eval mode or rate 0), and no
/// randomness is consumed in that case.
pub fn apply_dropout<T: Real, R: Rng + ?Sized>(
    m: &Matrix<T>,
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> (Matrix<T>, Option<Matrix<T>>) {
    debug_assert!((0.0..1.0).contains(&rate));
    if mode == Mode::Eval || rate == 0.0 {
        return (m.clone(), None);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask_data = (0..m.data().len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mask = Matrix::new(m.rows(), m.cols(), mask_data).expect("sized like input");
    let out = m.hadamard(&mask).expect("same shape");
    (out, Some(mask))
}
