//! Scalar and array primitives shared by the model and training code.

pub mod activation;
pub mod adam;
pub mod array;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod rng;

pub use activation::{argmax, relu, sigmoid, sigmoid_scalar, softmax, softmax_into, tanh_act, tanh_scalar};
pub use adam::{adam_update, AdamConfig, AdamState};
pub use array::{gemm, Array2, Layout};
pub use dropout::dropout_mask;
pub use gradcheck::{finite_diff_gradient, relative_error};
pub use loss::cross_entropy;
pub use rng::{derive_seed, Rng, Stream};
