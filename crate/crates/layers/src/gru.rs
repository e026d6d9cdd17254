//! Bidirectional GRU. Update/reset gates are sigmoid, the candidate is tanh,
//! and the reset gate multiplies the hidden state before the recurrent
//! candidate transform; h' = z*h + (1-z)*n. Initial hidden state is zero.

use avsr_autodiff::{Result, Tape, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::param::{gru_uniform, join, NamedParam, ParamSet};

pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w_update: Tensor,
    u_update: Tensor,
    b_update: Tensor,
    w_reset: Tensor,
    u_reset: Tensor,
    b_reset: Tensor,
    w_cand: Tensor,
    u_cand: Tensor,
    b_cand: Tensor,
}

impl GruCell {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(GruCell {
            input,
            hidden,
            w_update: gru_uniform(&[input, hidden], hidden, rng)?,
            u_update: gru_uniform(&[hidden, hidden], hidden, rng)?,
            b_update: gru_uniform(&[hidden], hidden, rng)?,
            w_reset: gru_uniform(&[input, hidden], hidden, rng)?,
            u_reset: gru_uniform(&[hidden, hidden], hidden, rng)?,
            b_reset: gru_uniform(&[hidden], hidden, rng)?,
            w_cand: gru_uniform(&[input, hidden], hidden, rng)?,
            u_cand: gru_uniform(&[hidden, hidden], hidden, rng)?,
            b_cand: gru_uniform(&[hidden], hidden, rng)?,
        })
    }

    fn gate(&self, tape: &Tape, x: &Tensor, h: &Tensor, w: &Tensor, u: &Tensor, b: &Tensor) -> Result<Tensor> {
        let xi = tape.matmul(x, w)?;
        let hi = tape.matmul(h, u)?;
        let sum = tape.add(&xi, &hi)?;
        tape.add_bias(&sum, b, 1)
    }

    /// One recurrence step: `x_t` `[b, input]`, `h` `[b, hidden]`.
    pub fn step(&self, tape: &Tape, x_t: &Tensor, h: &Tensor) -> Result<Tensor> {
        let z = tape.sigmoid(&self.gate(tape, x_t, h, &self.w_update, &self.u_update, &self.b_update)?)?;
        let r = tape.sigmoid(&self.gate(tape, x_t, h, &self.w_reset, &self.u_reset, &self.b_reset)?)?;
        let gated = tape.mul(&r, h)?;
        let n = tape.tanh(&self.gate(tape, x_t, &gated, &self.w_cand, &self.u_cand, &self.b_cand)?)?;
        let keep = tape.mul(&z, h)?;
        let one_minus_z = tape.affine(&z, -1.0, 1.0)?;
        let update = tape.mul(&one_minus_z, &n)?;
        tape.add(&keep, &update)
    }
}

impl ParamSet for GruCell {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        for (name, t) in [
            ("w_update", &self.w_update),
            ("u_update", &self.u_update),
            ("b_update", &self.b_update),
            ("w_reset", &self.w_reset),
            ("u_reset", &self.u_reset),
            ("b_reset", &self.b_reset),
            ("w_cand", &self.w_cand),
            ("u_cand", &self.u_cand),
            ("b_cand", &self.b_cand),
        ] {
            out.push(NamedParam::new(join(prefix, name), t.clone()));
        }
    }
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<NamedParam>) {}
}

/// One bidirectional layer: forward and backward cells over the sequence,
/// outputs concatenated per timestep to width 2*hidden.
pub struct BgruLayer {
    pub fwd: GruCell,
    pub bwd: GruCell,
    pub hidden: usize,
}

impl BgruLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(BgruLayer {
            fwd: GruCell::new(input, hidden, rng)?,
            bwd: GruCell::new(input, hidden, rng)?,
            hidden,
        })
    }

    /// `[b, t, f]` -> `[b, t, 2*hidden]`.
    pub fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let (batch, steps, feat) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let run = |cell: &GruCell, reverse: bool| -> Result<Vec<Tensor>> {
            let mut h = Tensor::zeros(&[batch, cell.hidden])?;
            let mut outs: Vec<Option<Tensor>> = vec![None; steps];
            for i in 0..steps {
                let t = if reverse { steps - 1 - i } else { i };
                let x_t = tape.slice(x, 1, t, 1)?;
                let x_t = tape.reshape(&x_t, &[batch, feat])?;
                h = cell.step(tape, &x_t, &h)?;
                outs[t] = Some(tape.reshape(&h, &[batch, 1, cell.hidden])?);
            }
            Ok(outs.into_iter().map(|o| o.unwrap()).collect())
        };
        let fwd_states = run(&self.fwd, false)?;
        let bwd_states = run(&self.bwd, true)?;
        let fwd_seq = tape.concat(&fwd_states, 1)?;
        let bwd_seq = tape.concat(&bwd_states, 1)?;
        tape.concat(&[fwd_seq, bwd_seq], 2)
    }
}

impl ParamSet for BgruLayer {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.fwd.collect_params(&join(prefix, "fwd"), out);
        self.bwd.collect_params(&join(prefix, "bwd"), out);
    }
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<NamedParam>) {}
}

/// Stack of bidirectional layers (two everywhere in this project).
pub struct BgruStack {
    pub layers: Vec<BgruLayer>,
}

impl BgruStack {
    /// `depth` layers: the first maps `input` -> 2*hidden, the rest
    /// 2*hidden -> 2*hidden.
    pub fn new(input: usize, hidden: usize, depth: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(depth);
        let mut fin = input;
        for _ in 0..depth {
            layers.push(BgruLayer::new(fin, hidden, rng)?);
            fin = 2 * hidden;
        }
        Ok(BgruStack { layers })
    }

    pub fn out_features(&self) -> usize {
        2 * self.layers.last().map(|l| l.hidden).unwrap_or(0)
    }

    pub fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(tape, &h)?;
        }
        Ok(h)
    }
}

impl ParamSet for BgruStack {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect_params(&join(prefix, &i.to_string()), out);
        }
    }
    fn collect_buffers(&self, _prefix: &str, _out: &mut Vec<NamedParam>) {}
}
