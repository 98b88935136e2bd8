//! Dense numeric substrate: tensors, small MLPs with exact backprop,
//! normalization, softmax, a finite-difference oracle and seeded streams.

pub mod gradcheck;
pub mod mlp;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, ParamSet};
pub use mlp::{mlp_apply, mlp_backprop, mlp_backprop_into, Activation, Layer, MlpParams, MlpTape};
pub use ops::{argmax, l2_normalize, l2_normalize_backward, softmax, softmax_cross_entropy};
pub use rng::{rng_fork, RngStream};
pub use tensor::{dot, Real, Tensor};
