//! The dual-channel U-Net: layer primitives, parameter layout, forward and
//! reverse passes, and the checkpoint format.

mod checkpoint;
pub mod layers;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CKPT_MAGIC};
pub use layers::{
    complex_conv, concat, conv3x3_same, conv_same, maxpool2, relu, upconv2, ComplexConvParams,
    ConvParams, TransposedConvParams,
};
pub use network::{backward, forward_with_trace, unet_backward, unet_forward, GradientSet, Trace};
pub use params::{
    init_params, Block, ConvLayer, LayerMode, LayerShape, ParamArray, UNetParams, UpLayer,
    FULL_WIDTH, TINY_WIDTH,
};
