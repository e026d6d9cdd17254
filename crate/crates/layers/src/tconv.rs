//! Temporal convolutional back-end used while the recurrent head is absent:
//! two 1D conv+batchnorm+relu layers over time, global temporal average
//! pooling, then an affine map to class logits.

use avsr_autodiff::{Result, Tape, Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

use crate::convbn::ConvBn1d;
use crate::param::{join, kaiming_affine, NamedParam, ParamSet};

pub const TCONV_KERNEL: usize = 5;
const TCONV_PAD: usize = 2;

pub struct TemporalConvBackend {
    pub conv1: ConvBn1d,
    pub conv2: ConvBn1d,
    fc_weight: Tensor,
    fc_bias: Tensor,
    pub features: usize,
    pub classes: usize,
}

impl TemporalConvBackend {
    pub fn new(features: usize, classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(TemporalConvBackend {
            conv1: ConvBn1d::new(&[features, features, TCONV_KERNEL], 1, TCONV_PAD, rng)?,
            conv2: ConvBn1d::new(&[features, features, TCONV_KERNEL], 1, TCONV_PAD, rng)?,
            fc_weight: kaiming_affine(features, classes, rng)?,
            fc_bias: Tensor::zeros(&[classes])?.requiring_grad(),
            features,
            classes,
        })
    }

    /// `[b, t, f]` -> `[b, classes]` sequence-level logits.
    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[2] != self.features {
            return Err(TensorError::ShapeMismatch {
                op: "temporal_conv_backend",
                detail: format!("expected [b,t,{}], got {:?}", self.features, x.shape()),
            });
        }
        if x.shape()[1] < TCONV_KERNEL {
            return Err(TensorError::ShapeMismatch {
                op: "temporal_conv_backend",
                detail: format!("sequence length {} below kernel extent {TCONV_KERNEL}", x.shape()[1]),
            });
        }
        let seq = tape.permute(x, &[0, 2, 1])?; // [b, f, t]
        let h = self.conv1.forward(tape, &seq, training, true)?;
        let h = self.conv2.forward(tape, &h, training, true)?;
        let pooled = tape.mean_axis(&h, 2)?; // [b, f]
        let logits = tape.matmul(&pooled, &self.fc_weight)?;
        tape.add_bias(&logits, &self.fc_bias, 1)
    }
}

impl ParamSet for TemporalConvBackend {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.conv2.collect_params(&join(prefix, "conv2"), out);
        out.push(NamedParam::new(join(prefix, "fc.weight"), self.fc_weight.clone()));
        out.push(NamedParam::new(join(prefix, "fc.bias"), self.fc_bias.clone()));
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_buffers(&join(prefix, "conv1"), out);
        self.conv2.collect_buffers(&join(prefix, "conv2"), out);
    }
}
