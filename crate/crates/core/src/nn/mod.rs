//! Layer primitives: dilated causal convolution, weight normalization,
//! activations, dropout, layer normalization, global average pooling and
//! softmax — each as a pure forward kernel plus a tape-recorded variant.

mod conv;
mod ops;

pub use conv::{conv1d_forward, weight_normalized_weights, ConvSpec};
pub use ops::{
    dropout_forward, global_average_pool, layer_norm_forward, relu_forward, softmax_forward,
    swish_forward,
};
