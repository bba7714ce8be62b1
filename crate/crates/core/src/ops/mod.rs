//! Primitive differentiable operators on dense tensors.
//!
//! Every forward has a matching backward that returns the gradient of
//! `sum(grad_out ⊙ forward(..))` with respect to each input.

mod conv;
mod elementwise;
mod norm;
mod pad;
mod pool;

pub use conv::{conv, conv_backward, conv_output_extent, ConvConfig, ConvGrads};
pub use elementwise::{
    add, concat_channels, concat_channels_backward, global_avg_pool, global_avg_pool_backward,
    linear, linear_backward, relu, relu_backward, sigmoid, split_channels_of, upsample_nearest,
    upsample_nearest_backward, LinearGrads,
};
pub use norm::{
    batchnorm, batchnorm_backward, groupnorm, groupnorm_backward, BatchNormCache, BatchNormGrads,
    BatchNormOutput, GroupNormCache, NormMode,
};
pub use pad::{crop, pad};
pub use pool::{pool3d, pool3d_backward, PoolCache, PoolConfig, PoolMode};

/// Debug-build check that finite inputs produced a finite output.
macro_rules! debug_finite {
    ($out:expr $(, $input:expr)*) => {
        #[cfg(debug_assertions)]
        {
            if true $(&& $input.all_finite())* {
                debug_assert!($out.all_finite(), "non-finite output from finite inputs");
            }
        }
    };
}
pub(crate) use debug_finite;
