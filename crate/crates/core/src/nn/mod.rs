//! Minimal CPU neural-network toolkit: dense `f32` tensors, a reverse-mode
//! tape, the layers used by the fusion and consistency networks, a named
//! parameter container with its on-disk format, and Adam-family optimizers.
//!
//! Everything is single-threaded and deterministic: the same inputs and
//! parameters always produce bit-identical outputs and gradients.

mod gemm;
pub(crate) mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::Adam;
pub use params::{BoundParams, ParamSet, WEIGHTS_MAGIC};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use params::LayerInit;
