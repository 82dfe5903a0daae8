//! Minimal dense-tensor engine for the FCN classifier.

mod fcn;
mod layers;
mod tensor;

pub use fcn::{
    batch_tensor, conv_glorot_limit, fcn_forward, BlockGrads, ConvBlock, FcnCache, FcnConfig, FcnGrads, FcnParams,
};
pub use layers::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, conv1d_backward, conv1d_forward,
    dense_backward, dense_forward, gap_backward, global_avg_pool, relu, relu_backward, softmax, update_running,
    xent_loss, BatchNormCache, BatchNormGrads, ConvGrads, DenseGrads, Mode, PredictionDist, BN_EPSILON, BN_MOMENTUM,
};
pub use tensor::Tensor;
