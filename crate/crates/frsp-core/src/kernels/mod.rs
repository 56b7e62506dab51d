//! Forward/backward numeric kernels. All kernels are pure functions of their
//! inputs; shapes are validated at the boundary and every output is checked
//! finite.

mod activation;
mod bn;
mod conv;
mod linear;
mod pool;
mod sgd;

pub use activation::{relu_backward, relu_forward, softmax_xent};
pub use bn::{bn_backward, bn_forward_eval, bn_forward_train, BnGrads, BnParams};
pub use conv::{conv2d_backward, conv2d_forward, conv_out_dim, ConvGrads};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use pool::{
    global_avgpool_backward, global_avgpool_forward, maxpool2_backward, maxpool2_forward,
};
pub use sgd::{sgd_step, SgdHyper};
