use avsr_autodiff::{Result, Tensor};
use rand_chacha::ChaCha8Rng;

/// A tensor with its hierarchical name ("video.bgru.0.fwd.w_update", ...).
#[derive(Clone, Debug)]
pub struct NamedParam {
    pub name: String,
    pub tensor: Tensor,
}

impl NamedParam {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        NamedParam { name: name.into(), tensor }
    }
}

/// Anything that owns parameters. `collect_params` yields trainable tensors;
/// `collect_buffers` yields non-trainable state (batchnorm running stats)
/// that still belongs in checkpoints.
pub trait ParamSet {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>);
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>);
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Gather both params and buffers of a set, prefixed.
pub fn all_tensors(set: &dyn ParamSet, prefix: &str) -> Vec<NamedParam> {
    let mut out = Vec::new();
    set.collect_params(prefix, &mut out);
    set.collect_buffers(prefix, &mut out);
    out
}

/// An ordered snapshot of named tensors (shape + data), detached from any
/// live model. This is what checkpoints carry and what stream-to-fused
/// initialization copies from.
#[derive(Clone, Debug, Default)]
pub struct ParamMap {
    entries: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl ParamMap {
    pub fn snapshot(named: &[NamedParam]) -> Self {
        let entries = named
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec(), p.tensor.to_vec()))
            .collect();
        ParamMap { entries }
    }

    pub fn from_entries(entries: Vec<(String, Vec<usize>, Vec<f64>)>) -> Self {
        ParamMap { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Vec<usize>, Vec<f64>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    /// Copy stored values into every target tensor. Each target must exist in
    /// the map with a matching shape; entries without a target are ignored.
    /// On failure, returns the offending names.
    pub fn apply_to(&self, targets: &[NamedParam]) -> std::result::Result<(), Vec<String>> {
        let mut missing = Vec::new();
        for t in targets {
            match self.get(&t.name) {
                Some((shape, data)) if shape == t.tensor.shape() => t.tensor.set_data(data),
                Some(_) => missing.push(format!("{} (shape mismatch)", t.name)),
                None => missing.push(t.name.clone()),
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(missing)
        }
    }
}

/// Kaiming fan-in normal init for a conv weight `[cout, cin, k...]`.
pub fn kaiming_conv(shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    Ok(Tensor::randn(shape, std, rng)?.requiring_grad())
}

/// Kaiming fan-in normal init for an affine weight `[fin, fout]`.
pub fn kaiming_affine(fin: usize, fout: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let std = (2.0 / fin as f64).sqrt();
    Ok(Tensor::randn(&[fin, fout], std, rng)?.requiring_grad())
}

/// Uniform ±1/√hidden init used by the GRU cells.
pub fn gru_uniform(shape: &[usize], hidden: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let bound = 1.0 / (hidden as f64).sqrt();
    Ok(Tensor::rand_uniform(shape, bound, rng)?.requiring_grad())
}
