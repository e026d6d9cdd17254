//! Convolution + batch normalization units. Convs feeding a batchnorm carry
//! no bias (the normalization would cancel it); a shared zero bias tensor
//! satisfies the op signature without entering the parameter set.

use avsr_autodiff::{PadMode, Result, Tape, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::param::{join, kaiming_conv, NamedParam, ParamSet};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batchnorm state over channel axis 1.
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: Tensor::full(&[channels], 1.0)?.requiring_grad(),
            beta: Tensor::zeros(&[channels])?.requiring_grad(),
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], 1.0)?,
        })
    }

    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        tape.batchnorm(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            BN_EPS,
            BN_MOMENTUM,
            training,
        )
    }
}

impl ParamSet for BatchNorm {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.push(NamedParam::new(join(prefix, "gamma"), self.gamma.clone()));
        out.push(NamedParam::new(join(prefix, "beta"), self.beta.clone()));
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.push(NamedParam::new(join(prefix, "running_mean"), self.running_mean.clone()));
        out.push(NamedParam::new(join(prefix, "running_var"), self.running_var.clone()));
    }
}

macro_rules! conv_bn_unit {
    ($name:ident, $stride_ty:ty, $forward:ident) => {
        pub struct $name {
            pub weight: Tensor,
            zero_bias: Tensor,
            pub bn: BatchNorm,
            pub stride: $stride_ty,
            pub pad: $stride_ty,
        }

        impl $name {
            pub fn new(weight_shape: &[usize], stride: $stride_ty, pad: $stride_ty, rng: &mut ChaCha8Rng) -> Result<Self> {
                Ok($name {
                    weight: kaiming_conv(weight_shape, rng)?,
                    zero_bias: Tensor::zeros(&[weight_shape[0]])?,
                    bn: BatchNorm::new(weight_shape[0])?,
                    stride,
                    pad,
                })
            }

            /// conv -> batchnorm, optionally -> relu.
            pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool, relu: bool) -> Result<Tensor> {
                let c = tape.$forward(x, &self.weight, &self.zero_bias, self.stride, self.pad)?;
                let n = self.bn.forward(tape, &c, training)?;
                if relu {
                    tape.relu(&n)
                } else {
                    Ok(n)
                }
            }
        }

        impl ParamSet for $name {
            fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
                out.push(NamedParam::new(join(prefix, "weight"), self.weight.clone()));
                self.bn.collect_params(&join(prefix, "bn"), out);
            }
            fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
                self.bn.collect_buffers(&join(prefix, "bn"), out);
            }
        }
    };
}

conv_bn_unit!(ConvBn2d, usize, conv2d);
conv_bn_unit!(ConvBn3d, [usize; 3], conv3d);

pub struct ConvBn1d {
    pub weight: Tensor,
    zero_bias: Tensor,
    pub bn: BatchNorm,
    pub stride: usize,
    pub pad: usize,
    pub pad_mode: PadMode,
}

impl ConvBn1d {
    pub fn new(weight_shape: &[usize], stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::with_pad_mode(weight_shape, stride, pad, PadMode::Zeros, rng)
    }

    pub fn with_pad_mode(
        weight_shape: &[usize],
        stride: usize,
        pad: usize,
        pad_mode: PadMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(ConvBn1d {
            weight: kaiming_conv(weight_shape, rng)?,
            zero_bias: Tensor::zeros(&[weight_shape[0]])?,
            bn: BatchNorm::new(weight_shape[0])?,
            stride,
            pad,
            pad_mode,
        })
    }

    /// conv -> batchnorm, optionally -> relu.
    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool, relu: bool) -> Result<Tensor> {
        let c = tape.conv1d_mode(x, &self.weight, &self.zero_bias, self.stride, self.pad, self.pad_mode)?;
        let n = self.bn.forward(tape, &c, training)?;
        if relu {
            tape.relu(&n)
        } else {
            Ok(n)
        }
    }
}

impl ParamSet for ConvBn1d {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.push(NamedParam::new(join(prefix, "weight"), self.weight.clone()));
        self.bn.collect_params(&join(prefix, "bn"), out);
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.bn.collect_buffers(&join(prefix, "bn"), out);
    }
}
