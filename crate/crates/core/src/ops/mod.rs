//! Forward and analytic-backward kernels for the toy networks.
//!
//! Everything here is a pure function of its arguments. Layers are composed
//! explicitly by [`crate::model`]; there is no tape.

mod activation;
mod conv;
mod dropout;
mod gradcheck;
mod linear;
mod pool;
mod sgd;

pub use activation::{relu, relu_backward, softmax_cross_entropy, softmax_rows};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_dim, ConvGrads, ConvParams};
pub use dropout::{dropout_apply, dropout_backward, DropoutMode, DropoutState, MaskKey};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use pool::{maxpool_backward, maxpool_forward, PoolIndices};
pub use sgd::{sgd_step, SgdConfig};
