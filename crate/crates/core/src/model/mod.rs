//! The separator network: a learned filterbank encoder, a stack of dilated
//! depthwise-separable blocks estimating softmax masks over the sources, and
//! a transposed-convolution decoder.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{sha256_hex, Checkpoint, EpochLoss, TrainMetadata, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    build_forward, decode, decode_cached, depthwise_separable_block, encode, forward_remix_latent,
    forward_separate, mask_partition_error, remix_from_estimates, separable_block, ForwardNodes,
    SeparationOutput, Variant,
};
pub use params::{
    init_params, BlockParams, BoundParams, ModelConfig, ModelParams, NormParams, ParamTree, Pointwise,
};
