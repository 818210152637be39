//! Dense real-matrix kernels, their backward rules, and a central-difference
//! gradient checker.

mod gradcheck;
mod matrix;
mod ops;
mod scalar;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, ParamSet, ParamTensor};
pub use matrix::Matrix;
pub use ops::{
    leaky_relu, leaky_relu_backward, leaky_relu_grad, sigmoid, softmax_rows,
    softmax_rows_backward,
};
pub use scalar::Real;
