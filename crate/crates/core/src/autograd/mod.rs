//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each operation of a forward pass; [`Tape::backward`]
//! replays the record in reverse to produce gradients. Trainable arrays live in
//! a [`ParamStore`] and enter a tape through [`Tape::param`].

pub mod gradcheck;
mod kernels;
mod params;
mod tape;
mod tensor;

pub use params::{ParamId, ParamManifestEntry, ParamStore};
pub use tape::{Activation, ElementwiseOp, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
