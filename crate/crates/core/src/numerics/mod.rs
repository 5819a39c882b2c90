//! Dense tensors, seeded randomness, spectral helpers and gradient checking.

mod gradcheck;
pub mod linalg;
mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use linalg::{numeric_rank, op_norm};
pub use rng::Rng;
pub use tensor::Tensor;
pub(crate) use tensor::{gemm, Layout};
