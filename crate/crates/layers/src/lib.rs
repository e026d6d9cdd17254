//! Network layers assembled from the autodiff primitives: the spatiotemporal
//! video front-end, 1D/2D residual backbones, bidirectional GRU stacks,
//! learned temporal gating, the temporal conv back-end used during stage-1
//! training, and the per-timestep classifier.

mod attention;
mod classifier;
mod convbn;
mod frontend;
mod gru;
mod param;
mod resnet;
mod tconv;
pub mod temporal;

pub use attention::{is_attention_param, AttentionSite, TemporalAttention};
pub use classifier::Classifier;
pub use convbn::{BatchNorm, ConvBn1d, ConvBn2d, ConvBn3d, BN_EPS, BN_MOMENTUM};
pub use frontend::{SpatiotemporalFrontend, FRONTEND_KERNEL, FRONTEND_PAD, FRONTEND_STRIDE};
pub use gru::{BgruLayer, BgruStack, GruCell};
pub use param::{all_tensors, gru_uniform, join, kaiming_affine, kaiming_conv, NamedParam, ParamMap, ParamSet};
pub use resnet::{
    BasicBlock1d, BasicBlock2d, Depth, ResNet1d, ResNet2d, AUDIO_STEM_KERNEL, AUDIO_STEM_PAD,
    AUDIO_STEM_STRIDE,
};
pub use tconv::{TemporalConvBackend, TCONV_KERNEL};
