//! Dense tensor arithmetic, stable primitives, optimizer and gradient checking.

mod gradcheck;
mod ops;
mod optim;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff_gradcheck, finite_diff_gradcheck_with, relative_error, GradCheckEntry, GradCheckReport, Stencil};
pub use ops::{
    affine, affine_backward, masked_softmax, masked_softmax_backward, prefix_cumsum,
    prefix_cumsum_backward, stable_log, stable_log_grad, suffix_cumsum, suffix_cumsum_backward,
    LOG_FLOOR,
};
pub use optim::{AdamConfig, OptimizerState};
pub use rng::SeededRng;
pub use tensor::{axpy, dot, gemm, Tensor};

/// A named trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = value.zeros_like();
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
