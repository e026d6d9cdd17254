use std::cell::RefCell;

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::linalg;
use crate::tensor::Tensor;

/// One recorded forward op: inputs, output and whatever the VJP needs.
pub(crate) enum Record {
    Add { a: Tensor, b: Tensor, out: Tensor },
    Mul { a: Tensor, b: Tensor, out: Tensor },
    Affine { x: Tensor, mul: f64, out: Tensor },
    AddBias { x: Tensor, bias: Tensor, axis: usize, out: Tensor },
    Matmul { a: Tensor, b: Tensor, out: Tensor },
    Conv { input: Tensor, weight: Tensor, bias: Tensor, geom: ConvGeom, batch: usize, out: Tensor },
    BatchNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mean: Vec<f64>,
        invstd: Vec<f64>,
        training: bool,
        out: Tensor,
    },
    Relu { x: Tensor, out: Tensor },
    Sigmoid { x: Tensor, out: Tensor },
    Tanh { x: Tensor, out: Tensor },
    Softmax { x: Tensor, axis: usize, out: Tensor },
    CrossEntropy { logits: Tensor, labels: Vec<usize>, probs: Vec<f64>, out: Tensor },
    Sum { x: Tensor, out: Tensor },
    MeanAxis { x: Tensor, axis: usize, out: Tensor },
    Reshape { x: Tensor, out: Tensor },
    Permute { x: Tensor, perm: Vec<usize>, out: Tensor },
    Concat { xs: Vec<Tensor>, axis: usize, out: Tensor },
    Slice { x: Tensor, axis: usize, start: usize, out: Tensor },
    TimeGate { x: Tensor, gate: Tensor, out: Tensor },
}

impl Record {
    fn output(&self) -> &Tensor {
        match self {
            Record::Add { out, .. }
            | Record::Mul { out, .. }
            | Record::Affine { out, .. }
            | Record::AddBias { out, .. }
            | Record::Matmul { out, .. }
            | Record::Conv { out, .. }
            | Record::BatchNorm { out, .. }
            | Record::Relu { out, .. }
            | Record::Sigmoid { out, .. }
            | Record::Tanh { out, .. }
            | Record::Softmax { out, .. }
            | Record::CrossEntropy { out, .. }
            | Record::Sum { out, .. }
            | Record::MeanAxis { out, .. }
            | Record::Reshape { out, .. }
            | Record::Permute { out, .. }
            | Record::Concat { out, .. }
            | Record::Slice { out, .. }
            | Record::TimeGate { out, .. } => out,
        }
    }
}

/// Reverse-mode tape. Ops executed through a recording tape append a record
/// each; [`Tape::backward`] replays them once, in reverse, accumulating
/// gradients additively across fan-out. A tape and its tensors belong to one
/// execution context (`Tape` is `!Send` by construction).
pub struct Tape {
    pub(crate) records: RefCell<Vec<Record>>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { records: RefCell::new(Vec::new()), recording: true }
    }

    /// A tape that executes ops without recording them; for inference and
    /// finite-difference probes.
    pub fn no_grad() -> Self {
        Tape { records: RefCell::new(Vec::new()), recording: false }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn record_count(&self) -> usize {
        self.records.borrow().len()
    }

    pub(crate) fn push(&self, record: Record) {
        if self.recording {
            self.records.borrow_mut().push(record);
        }
    }

    /// Seed d(loss)/d(loss) = 1 and sweep the tape once in reverse. Gradients
    /// land in each tensor's grad buffer and add to whatever is already there.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !loss.is_scalar() {
            return Err(TensorError::NonScalarLoss { shape: loss.shape().to_vec() });
        }
        loss.accumulate_grad(&[1.0]);
        let records = self.records.borrow();
        for record in records.iter().rev() {
            let dy = match record.output().grad() {
                Some(g) => g,
                None => continue, // output never fed the loss
            };
            backward_record(record, &dy);
        }
        Ok(())
    }
}

fn backward_record(record: &Record, dy: &[f64]) {
    match record {
        Record::Add { a, b, .. } => {
            a.accumulate_grad(dy);
            b.accumulate_grad(dy);
        }
        Record::Mul { a, b, .. } => {
            let (av, bv) = (a.data(), b.data());
            let da: Vec<f64> = dy.iter().zip(bv.iter()).map(|(d, v)| d * v).collect();
            let db: Vec<f64> = dy.iter().zip(av.iter()).map(|(d, v)| d * v).collect();
            drop((av, bv));
            a.accumulate_grad(&da);
            b.accumulate_grad(&db);
        }
        Record::Affine { x, mul, .. } => {
            let dx: Vec<f64> = dy.iter().map(|d| d * mul).collect();
            x.accumulate_grad(&dx);
        }
        Record::AddBias { x, bias, axis, .. } => {
            x.accumulate_grad(dy);
            let (outer, len, inner) = kernels::axis_split(x.shape(), *axis);
            let mut db = vec![0.0; len];
            for o in 0..outer {
                for j in 0..len {
                    let base = (o * len + j) * inner;
                    db[j] += dy[base..base + inner].iter().sum::<f64>();
                }
            }
            bias.accumulate_grad(&db);
        }
        Record::Matmul { a, b, .. } => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            let mut da = vec![0.0; m * k];
            let mut db = vec![0.0; k * n];
            linalg::gemm_acc_nt(m, n, k, dy, &b.data(), &mut da);
            linalg::gemm_acc_tn(k, m, n, &a.data(), dy, &mut db);
            a.accumulate_grad(&da);
            b.accumulate_grad(&db);
        }
        Record::Conv { input, weight, bias, geom, batch, .. } => {
            let (din, dw, db) = kernels::conv_backward(geom, *batch, &input.data(), &weight.data(), dy);
            input.accumulate_grad(&din);
            weight.accumulate_grad(&dw);
            bias.accumulate_grad(&db);
        }
        Record::BatchNorm { x, gamma, beta, mean, invstd, training, .. } => {
            let shape = x.shape();
            let channels = shape[1];
            let batch = shape[0];
            let spatial: usize = shape[2..].iter().product();
            let m = (batch * spatial) as f64;
            let xv = x.data();
            let gv = gamma.data();
            let mut dgamma = vec![0.0; channels];
            let mut dbeta = vec![0.0; channels];
            let mut dx = vec![0.0; xv.len()];
            // First pass: per-channel reductions of dy and dy*xhat.
            for b in 0..batch {
                for c in 0..channels {
                    let base = (b * channels + c) * spatial;
                    for s in 0..spatial {
                        let xhat = (xv[base + s] - mean[c]) * invstd[c];
                        dgamma[c] += dy[base + s] * xhat;
                        dbeta[c] += dy[base + s];
                    }
                }
            }
            if *training {
                for b in 0..batch {
                    for c in 0..channels {
                        let base = (b * channels + c) * spatial;
                        let scale = gv[c] * invstd[c];
                        for s in 0..spatial {
                            let xhat = (xv[base + s] - mean[c]) * invstd[c];
                            dx[base + s] =
                                scale * (dy[base + s] - dbeta[c] / m - xhat * dgamma[c] / m);
                        }
                    }
                }
            } else {
                // Eval mode treats the running stats as constants.
                for b in 0..batch {
                    for c in 0..channels {
                        let base = (b * channels + c) * spatial;
                        let scale = gv[c] * invstd[c];
                        for s in 0..spatial {
                            dx[base + s] = scale * dy[base + s];
                        }
                    }
                }
            }
            drop((xv, gv));
            x.accumulate_grad(&dx);
            gamma.accumulate_grad(&dgamma);
            beta.accumulate_grad(&dbeta);
        }
        Record::Relu { x, .. } => {
            let xv = x.data();
            let dx: Vec<f64> = dy
                .iter()
                .zip(xv.iter())
                .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                .collect();
            drop(xv);
            x.accumulate_grad(&dx);
        }
        Record::Sigmoid { x, out } => {
            let s = out.data();
            let dx: Vec<f64> = dy.iter().zip(s.iter()).map(|(d, &v)| d * v * (1.0 - v)).collect();
            drop(s);
            x.accumulate_grad(&dx);
        }
        Record::Tanh { x, out } => {
            let t = out.data();
            let dx: Vec<f64> = dy.iter().zip(t.iter()).map(|(d, &v)| d * (1.0 - v * v)).collect();
            drop(t);
            x.accumulate_grad(&dx);
        }
        Record::Softmax { x, axis, out } => {
            let dx = kernels::softmax_backward(x.shape(), *axis, &out.data(), dy);
            x.accumulate_grad(&dx);
        }
        Record::CrossEntropy { logits, labels, probs, .. } => {
            let classes = logits.shape()[1];
            let n = labels.len();
            let scale = dy[0] / n as f64;
            let mut dl = vec![0.0; probs.len()];
            for (row, &label) in labels.iter().enumerate() {
                for c in 0..classes {
                    let indicator = if c == label { 1.0 } else { 0.0 };
                    dl[row * classes + c] = (probs[row * classes + c] - indicator) * scale;
                }
            }
            logits.accumulate_grad(&dl);
        }
        Record::Sum { x, .. } => {
            let dx = vec![dy[0]; x.len()];
            x.accumulate_grad(&dx);
        }
        Record::MeanAxis { x, axis, .. } => {
            let (outer, len, inner) = kernels::axis_split(x.shape(), *axis);
            let scale = 1.0 / len as f64;
            let mut dx = vec![0.0; x.len()];
            for o in 0..outer {
                for j in 0..len {
                    let base = (o * len + j) * inner;
                    let dbase = o * inner;
                    for i in 0..inner {
                        dx[base + i] = dy[dbase + i] * scale;
                    }
                }
            }
            x.accumulate_grad(&dx);
        }
        Record::Reshape { x, .. } => {
            x.accumulate_grad(dy);
        }
        Record::Permute { x, perm, .. } => {
            // Scatter dy back through the inverse index map.
            let in_shape = x.shape();
            let rank = in_shape.len();
            let mut in_strides = vec![1usize; rank];
            for a in (0..rank.saturating_sub(1)).rev() {
                in_strides[a] = in_strides[a + 1] * in_shape[a + 1];
            }
            let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
            let sperm: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
            let mut dx = vec![0.0; x.len()];
            let mut idx = vec![0usize; rank];
            let mut in_flat = 0usize;
            for &d in dy {
                dx[in_flat] += d;
                for a in (0..rank).rev() {
                    idx[a] += 1;
                    in_flat += sperm[a];
                    if idx[a] < out_shape[a] {
                        break;
                    }
                    in_flat -= sperm[a] * out_shape[a];
                    idx[a] = 0;
                }
            }
            x.accumulate_grad(&dx);
        }
        Record::Concat { xs, axis, out } => {
            let (outer, total_len, inner) = kernels::axis_split(out.shape(), *axis);
            let mut offset = 0usize;
            for x in xs {
                let len = x.shape()[*axis];
                let mut dx = vec![0.0; x.len()];
                for o in 0..outer {
                    for j in 0..len {
                        let src = (o * total_len + offset + j) * inner;
                        let dst = (o * len + j) * inner;
                        dx[dst..dst + inner].copy_from_slice(&dy[src..src + inner]);
                    }
                }
                x.accumulate_grad(&dx);
                offset += len;
            }
        }
        Record::Slice { x, axis, start, out } => {
            let (outer, full_len, inner) = kernels::axis_split(x.shape(), *axis);
            let len = out.shape()[*axis];
            let mut dx = vec![0.0; x.len()];
            for o in 0..outer {
                for j in 0..len {
                    let dst = (o * full_len + start + j) * inner;
                    let src = (o * len + j) * inner;
                    dx[dst..dst + inner].copy_from_slice(&dy[src..src + inner]);
                }
            }
            x.accumulate_grad(&dx);
        }
        Record::TimeGate { x, gate, .. } => {
            let shape = x.shape();
            let (batch, steps, feat) = (shape[0], shape[1], shape[2]);
            let xv = x.data();
            let gv = gate.data();
            let mut dx = vec![0.0; xv.len()];
            let mut dg = vec![0.0; steps];
            for b in 0..batch {
                for t in 0..steps {
                    let base = (b * steps + t) * feat;
                    let g = gv[t];
                    let mut acc = 0.0;
                    for f in 0..feat {
                        dx[base + f] = dy[base + f] * g;
                        acc += dy[base + f] * xv[base + f];
                    }
                    dg[t] += acc;
                }
            }
            drop((xv, gv));
            x.accumulate_grad(&dx);
            gate.accumulate_grad(&dg);
        }
    }
}
