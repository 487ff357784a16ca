//! Dense matrices, reverse-mode differentiation, and seeded randomness.

mod gradcheck;
mod kernels;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, REL_ERROR_FLOOR};
pub use kernels::{dropout, gelu, gelu_scalar, log_softmax_rows, normal_cdf, softmax_rows, Mode};
pub use rng::{stream_rng, SeededRng, Stream};
pub use tape::{Tape, Var};
pub use tensor::Tensor2D;
