//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! The primitive set is exactly what the grammar networks, the inference
//! network and the charts need: affine maps, elementwise nonlinearities,
//! concatenation, pooling and log-space normalizers. Everything is `f64`.

mod init;
mod params;
mod tape;
mod tensor;

pub use init::{fans, seeded_rng, xavier_uniform, xavier_uniform_init, SeededRng};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::{log_softmax_into, logsumexp, Tensor};
