//! Learned per-timestep gating. The gate is the sigmoid of a free parameter
//! vector of length T, independent of the input; every feature of timestep t
//! is multiplied by gate[t]. Raw parameters start at zero (gate 0.5).

use avsr_autodiff::{Result, Tape, Tensor};

use crate::param::{join, NamedParam, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionSite {
    Video,
    Audio,
    Combined,
}

pub struct TemporalAttention {
    /// Unconstrained parameters, length T. The applied gate is sigmoid(raw).
    pub raw: Tensor,
    pub site: AttentionSite,
}

impl TemporalAttention {
    pub fn new(steps: usize, site: AttentionSite) -> Result<Self> {
        Ok(TemporalAttention {
            raw: Tensor::zeros(&[steps])?.requiring_grad(),
            site,
        })
    }

    pub fn steps(&self) -> usize {
        self.raw.len()
    }

    /// Gate a `[b, t, f]` sequence; gradients flow to the raw parameters.
    pub fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let gate = tape.sigmoid(&self.raw)?;
        tape.time_gate(x, &gate)
    }

    /// Current gate values in (0,1), outside any tape.
    pub fn gate_values(&self) -> Vec<f64> {
        self.raw.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
    }
}

impl ParamSet for TemporalAttention {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.push(NamedParam::new(join(prefix, "raw"), self.raw.clone()));
    }
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<NamedParam>) {}
}

/// Attention parameters are the only group trained at the doubled rate;
/// they are identified by name.
pub fn is_attention_param(name: &str) -> bool {
    name.ends_with("attention.raw")
}
