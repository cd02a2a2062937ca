//! Dense matrix arithmetic, seeded randomness, and the parameter-block
//! abstraction the rest of the crate builds on.

mod matrix;
mod param;
mod rng;

pub use matrix::{ElemOp, Matrix};
pub use param::ParamTensor;
pub use rng::{mix_seed, Rng};
