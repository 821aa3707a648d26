//! Dense `f64` tensors and a reverse-mode differentiation tape.
//!
//! Values are recorded on a [`Tape`] in execution order; [`Tape::backward`]
//! sweeps it once in reverse and returns the gradient of a scalar output with
//! respect to every leaf. [`GradCheck`] verifies those gradients against
//! central finite differences.
//!
//! ```
//! use plantar_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

mod error;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_difference_check, relative_error, GradCheck, GradCheckReport};
pub use tape::{BatchNormMode, BatchStats, Gradients, Mode, OpKind, Tape, Var};
pub use tensor::Tensor;
