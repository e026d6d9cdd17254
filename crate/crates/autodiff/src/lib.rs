//! Dense f64 tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Everything runs in double precision on the CPU. Ops are executed through a
//! [`Tape`]; calling [`Tape::backward`] on a scalar loss populates the `grad`
//! buffer of every tensor that fed it. Parameters are ordinary tensors marked
//! with `requiring_grad()`; gradient accumulation is additive and callers
//! zero gradients between steps.
//!
//! Determinism: all randomness is ChaCha8 seeded by the caller, and compute
//! kernels accumulate in a fixed order regardless of the `AVSR_THREADS`
//! setting, so equal seeds give bitwise-equal results.

mod error;
mod gradcheck;
mod kernels;
pub mod linalg;
mod ops;
mod rng;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use kernels::PadMode;
pub use gradcheck::{grad_check, GradCheck, GradCheckReport, ParamCheck};
pub use rng::{normal, uniform};
pub use tape::Tape;
pub use tensor::{element_count, Tensor};

/// Clear gradients on a set of tensors (typically the trainable parameters).
pub fn zero_grads<'a>(params: impl IntoIterator<Item = &'a Tensor>) {
    for p in params {
        p.zero_grad();
    }
}
