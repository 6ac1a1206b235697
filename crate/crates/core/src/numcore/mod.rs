//! Dense tensors, a reverse-mode tape, and a reproducible random source.
//!
//! Everything numeric in the crate runs through these types. Tensors are
//! plain row-major buffers; differentiation happens by recording operations
//! on a [`Tape`] and replaying it backwards from a scalar loss.

mod init;
mod real;
mod rng;
mod tape;
mod tensor;

pub use init::{glorot_limit, glorot_uniform};
pub use real::Real;
pub use rng::Rng;
pub use tape::{Activation, BinaryKind, Tape, Var};
pub use tensor::Tensor;
