//! Spatiotemporal front-end: one 3D conv over (time, height, width) with a
//! 5x7x7 kernel, stride (1,2,2) and padding (2,3,3), followed by batchnorm
//! and relu. Temporal length is preserved; spatial extents halve.

use avsr_autodiff::{Result, Tape, Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

use crate::convbn::ConvBn3d;
use crate::param::{join, NamedParam, ParamSet};

pub const FRONTEND_KERNEL: [usize; 3] = [5, 7, 7];
pub const FRONTEND_STRIDE: [usize; 3] = [1, 2, 2];
pub const FRONTEND_PAD: [usize; 3] = [2, 3, 3];

pub struct SpatiotemporalFrontend {
    unit: ConvBn3d,
    pub out_channels: usize,
}

impl SpatiotemporalFrontend {
    pub fn new(out_channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shape = [
            out_channels,
            1,
            FRONTEND_KERNEL[0],
            FRONTEND_KERNEL[1],
            FRONTEND_KERNEL[2],
        ];
        Ok(SpatiotemporalFrontend {
            unit: ConvBn3d::new(&shape, FRONTEND_STRIDE, FRONTEND_PAD, rng)?,
            out_channels,
        })
    }

    /// `[b, 1, t, h, w]` -> `[b, c, t, h/2, w/2]`.
    pub fn forward(&self, tape: &Tape, video: &Tensor, training: bool) -> Result<Tensor> {
        if video.rank() != 5 || video.shape()[1] != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "frontend",
                detail: format!("expected [b,1,t,h,w], got {:?}", video.shape()),
            });
        }
        let (t, h, w) = (video.shape()[2], video.shape()[3], video.shape()[4]);
        if t < 1 || h < FRONTEND_KERNEL[1] || w < FRONTEND_KERNEL[2] {
            return Err(TensorError::ShapeMismatch {
                op: "frontend",
                detail: format!("input extents ({t},{h},{w}) below kernel {FRONTEND_KERNEL:?}"),
            });
        }
        self.unit.forward(tape, video, training, true)
    }
}

impl ParamSet for SpatiotemporalFrontend {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.unit.collect_params(&join(prefix, "conv"), out);
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.unit.collect_buffers(&join(prefix, "conv"), out);
    }
}
