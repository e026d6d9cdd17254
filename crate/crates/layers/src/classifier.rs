//! Shared affine + softmax applied independently at every timestep.

use avsr_autodiff::{Result, Tape, Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

use crate::param::{join, kaiming_affine, NamedParam, ParamSet};

pub struct Classifier {
    pub weight: Tensor,
    pub bias: Tensor,
    pub features: usize,
    pub classes: usize,
}

impl Classifier {
    pub fn new(features: usize, classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Classifier {
            weight: kaiming_affine(features, classes, rng)?,
            bias: Tensor::zeros(&[classes])?.requiring_grad(),
            features,
            classes,
        })
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 3 || x.shape()[2] != self.features {
            return Err(TensorError::ShapeMismatch {
                op: "classifier",
                detail: format!("expected [b,t,{}], got {:?}", self.features, x.shape()),
            });
        }
        Ok(())
    }

    /// `[b, t, f]` -> flat per-timestep logits `[b*t, classes]`; row index is
    /// b*t + t, matching labels repeated per timestep.
    pub fn logits_flat(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (b, t) = (x.shape()[0], x.shape()[1]);
        let flat = tape.reshape(x, &[b * t, self.features])?;
        let logits = tape.matmul(&flat, &self.weight)?;
        tape.add_bias(&logits, &self.bias, 1)
    }

    /// `[b, t, f]` -> per-timestep probabilities `[b, t, classes]`, each
    /// `[b, t, :]` row summing to 1.
    pub fn probs(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let (b, t) = (x.shape()[0], x.shape()[1]);
        let logits = self.logits_flat(tape, x)?;
        let sm = tape.softmax(&logits, 1)?;
        tape.reshape(&sm, &[b, t, self.classes])
    }
}

impl ParamSet for Classifier {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.push(NamedParam::new(join(prefix, "weight"), self.weight.clone()));
        out.push(NamedParam::new(join(prefix, "bias"), self.bias.clone()));
    }
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<NamedParam>) {}
}
