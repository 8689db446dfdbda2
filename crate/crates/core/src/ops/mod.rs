//! Forward and backward kernels for the layer types the network uses.

pub mod conv;
pub mod dense;
pub mod pool;
pub mod reference;

pub use conv::{conv3d_backward, conv3d_forward, conv3d_param_grads, ConvCache, ConvGeometry, ConvGrads};
pub use dense::{
    cross_entropy_loss, fc_backward, fc_forward, relu_backward, relu_forward, softmax, FcCache, FcGrads,
    ReluCache,
};
pub use pool::{maxpool3d_backward, maxpool3d_forward, PoolCache, PoolGeometry};
