//! Forward ops. Each validates shapes, computes the output, rejects
//! non-finite results and records itself on the tape.

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom, PadMode};
use crate::linalg;
use crate::tape::{Record, Tape};
use crate::tensor::{ensure_finite, Tensor};

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_axis(op: &'static str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        return Err(TensorError::InvalidAxis { op, axis, rank });
    }
    Ok(())
}

impl Tape {
    fn output(&self, op: &'static str, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        ensure_finite(op, &data)?;
        Tensor::from_vec(shape, data)
    }

    /// Elementwise a + b (identical shapes; no implicit broadcasting).
    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
        let out = self.output("add", a.shape(), data)?;
        self.push(Record::Add { a: a.clone(), b: b.clone(), out: out.clone() });
        Ok(out)
    }

    /// Elementwise a ⊙ b.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
        let out = self.output("mul", a.shape(), data)?;
        self.push(Record::Mul { a: a.clone(), b: b.clone(), out: out.clone() });
        Ok(out)
    }

    /// mul·x + add, elementwise with scalar coefficients.
    pub fn affine(&self, x: &Tensor, mul: f64, add: f64) -> Result<Tensor> {
        let data = x.data().iter().map(|v| mul * v + add).collect();
        let out = self.output("affine", x.shape(), data)?;
        self.push(Record::Affine { x: x.clone(), mul, out: out.clone() });
        Ok(out)
    }

    /// Broadcast-add a vector along `axis`: out[..., c, ...] = x[..., c, ...] + bias[c].
    pub fn add_bias(&self, x: &Tensor, bias: &Tensor, axis: usize) -> Result<Tensor> {
        check_axis("add_bias", axis, x.rank())?;
        if bias.rank() != 1 || bias.shape()[0] != x.shape()[axis] {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} vs axis extent {}", bias.shape(), x.shape()[axis]),
            ));
        }
        let (outer, len, inner) = kernels::axis_split(x.shape(), axis);
        let xv = x.data();
        let bv = bias.data();
        let mut data = vec![0.0; xv.len()];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                let b = bv[j];
                for i in 0..inner {
                    data[base + i] = xv[base + i] + b;
                }
            }
        }
        drop((xv, bv));
        let out = self.output("add_bias", x.shape(), data)?;
        self.push(Record::AddBias { x: x.clone(), bias: bias.clone(), axis, out: out.clone() });
        Ok(out)
    }

    /// Matrix product of `[m,k]` and `[k,n]`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(shape_err("matmul", format!("{:?} × {:?}", a.shape(), b.shape())));
        }
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut data = vec![0.0; m * n];
        linalg::gemm_acc(m, k, n, &a.data(), &b.data(), &mut data);
        let out = self.output("matmul", &[m, n], data)?;
        self.push(Record::Matmul { a: a.clone(), b: b.clone(), out: out.clone() });
        Ok(out)
    }

    fn conv(
        &self,
        op: &'static str,
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: &[usize],
        pad: &[usize],
        pad_mode: PadMode,
    ) -> Result<Tensor> {
        let rank = stride.len();
        if input.rank() != rank + 2 || weight.rank() != rank + 2 {
            return Err(shape_err(
                op,
                format!("input {:?} / weight {:?}", input.shape(), weight.shape()),
            ));
        }
        if weight.shape()[1] != input.shape()[1] {
            return Err(shape_err(
                op,
                format!("channels: input {}, weight {}", input.shape()[1], weight.shape()[1]),
            ));
        }
        if stride.iter().any(|&s| s == 0) {
            return Err(shape_err(op, "stride must be >= 1".into()));
        }
        let cout = weight.shape()[0];
        if bias.rank() != 1 || bias.shape()[0] != cout {
            return Err(shape_err(op, format!("bias {:?} vs cout {}", bias.shape(), cout)));
        }
        let in_dims = input.shape()[2..].to_vec();
        let k_dims = weight.shape()[2..].to_vec();
        let mut out_dims = Vec::with_capacity(rank);
        for a in 0..rank {
            match kernels::conv_out_extent(in_dims[a], k_dims[a], stride[a], pad[a]) {
                Some(e) => out_dims.push(e),
                None => {
                    return Err(shape_err(
                        op,
                        format!(
                            "no valid output extent on axis {a}: input {}, kernel {}, stride {}, pad {}",
                            in_dims[a], k_dims[a], stride[a], pad[a]
                        ),
                    ))
                }
            }
        }
        let geom = ConvGeom {
            cin: input.shape()[1],
            cout,
            in_dims,
            k_dims,
            out_dims: out_dims.clone(),
            stride: stride.to_vec(),
            pad: pad.to_vec(),
            pad_mode,
        };
        let batch = input.shape()[0];
        let data = kernels::conv_forward(&geom, batch, &input.data(), &weight.data(), &bias.data());
        let mut out_shape = vec![batch, cout];
        out_shape.extend_from_slice(&out_dims);
        let out = self.output(op, &out_shape, data)?;
        self.push(Record::Conv {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
            geom,
            batch,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Cross-correlation over `[b, cin, l]` with weight `[cout, cin, k]`,
    /// zero padding.
    pub fn conv1d(&self, input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        self.conv("conv1d", input, weight, bias, &[stride], &[pad], PadMode::Zeros)
    }

    /// conv1d with an explicit padding mode.
    pub fn conv1d_mode(
        &self,
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        pad: usize,
        pad_mode: PadMode,
    ) -> Result<Tensor> {
        self.conv("conv1d", input, weight, bias, &[stride], &[pad], pad_mode)
    }

    /// Cross-correlation over `[b, cin, h, w]` with weight `[cout, cin, kh, kw]`.
    pub fn conv2d(&self, input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        self.conv("conv2d", input, weight, bias, &[stride, stride], &[pad, pad], PadMode::Zeros)
    }

    /// Cross-correlation over `[b, cin, t, h, w]` with per-axis stride/pad.
    pub fn conv3d(
        &self,
        input: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Tensor> {
        self.conv("conv3d", input, weight, bias, &stride, &pad, PadMode::Zeros)
    }

    /// Batch normalization over channel axis 1 of `[b, c, ...]`. Training
    /// mode normalizes by batch statistics and folds them into the running
    /// buffers (in place, not differentiated); eval mode applies the stored
    /// running statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        running_mean: &Tensor,
        running_var: &Tensor,
        eps: f64,
        momentum: f64,
        training: bool,
    ) -> Result<Tensor> {
        if x.rank() < 2 {
            return Err(shape_err("batchnorm", format!("need rank >= 2, got {:?}", x.shape())));
        }
        let channels = x.shape()[1];
        for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
            if t.rank() != 1 || t.shape()[0] != channels {
                return Err(shape_err("batchnorm", format!("{name} {:?} vs {channels} channels", t.shape())));
            }
        }
        let batch = x.shape()[0];
        let spatial: usize = x.shape()[2..].iter().product();
        let m = batch * spatial;
        let (mean, invstd) = if training {
            if m == 0 {
                return Err(TensorError::DegenerateBatch { op: "batchnorm" });
            }
            let xv = x.data();
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for b in 0..batch {
                for c in 0..channels {
                    let base = (b * channels + c) * spatial;
                    mean[c] += xv[base..base + spatial].iter().sum::<f64>();
                }
            }
            for v in mean.iter_mut() {
                *v /= m as f64;
            }
            for b in 0..batch {
                for c in 0..channels {
                    let base = (b * channels + c) * spatial;
                    var[c] += xv[base..base + spatial].iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>();
                }
            }
            for v in var.iter_mut() {
                *v /= m as f64;
            }
            drop(xv);
            // Fold into running stats; the running variance uses the
            // unbiased estimate, as is conventional.
            let unbias = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 1.0 };
            running_mean.update_data(|rm| {
                for (r, &b) in rm.iter_mut().zip(mean.iter()) {
                    *r = (1.0 - momentum) * *r + momentum * b;
                }
            });
            running_var.update_data(|rv| {
                for (r, &b) in rv.iter_mut().zip(var.iter()) {
                    *r = (1.0 - momentum) * *r + momentum * b * unbias;
                }
            });
            let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            (mean, invstd)
        } else {
            let mean = running_mean.to_vec();
            let invstd: Vec<f64> = running_var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            (mean, invstd)
        };
        let xv = x.data();
        let gv = gamma.data();
        let bv = beta.data();
        let mut data = vec![0.0; xv.len()];
        for b in 0..batch {
            for c in 0..channels {
                let base = (b * channels + c) * spatial;
                let (mu, is, g, be) = (mean[c], invstd[c], gv[c], bv[c]);
                for s in 0..spatial {
                    data[base + s] = (xv[base + s] - mu) * is * g + be;
                }
            }
        }
        drop((xv, gv, bv));
        let out = self.output("batchnorm", x.shape(), data)?;
        self.push(Record::BatchNorm {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            mean,
            invstd,
            training,
            out: out.clone(),
        });
        Ok(out)
    }

    pub fn relu(&self, x: &Tensor) -> Result<Tensor> {
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = self.output("relu", x.shape(), data)?;
        self.push(Record::Relu { x: x.clone(), out: out.clone() });
        Ok(out)
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        let data = x.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let out = self.output("sigmoid", x.shape(), data)?;
        self.push(Record::Sigmoid { x: x.clone(), out: out.clone() });
        Ok(out)
    }

    pub fn tanh(&self, x: &Tensor) -> Result<Tensor> {
        let data = x.data().iter().map(|&v| v.tanh()).collect();
        let out = self.output("tanh", x.shape(), data)?;
        self.push(Record::Tanh { x: x.clone(), out: out.clone() });
        Ok(out)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&self, x: &Tensor, axis: usize) -> Result<Tensor> {
        check_axis("softmax", axis, x.rank())?;
        let data = kernels::softmax(x.shape(), axis, &x.data());
        let out = self.output("softmax", x.shape(), data)?;
        self.push(Record::Softmax { x: x.clone(), axis, out: out.clone() });
        Ok(out)
    }

    /// Mean over the batch of −log softmax(logits)[label], fused and
    /// max-stabilized. `logits` is `[n, classes]`.
    pub fn cross_entropy(&self, logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
        if logits.rank() != 2 || logits.shape()[0] != labels.len() {
            return Err(shape_err(
                "cross_entropy",
                format!("logits {:?} vs {} labels", logits.shape(), labels.len()),
            ));
        }
        let classes = logits.shape()[1];
        for &l in labels {
            if l >= classes {
                return Err(TensorError::LabelOutOfRange { label: l, classes });
            }
        }
        let lv = logits.data();
        let n = labels.len();
        let mut probs = vec![0.0; n * classes];
        let mut loss = 0.0;
        for (row, &label) in labels.iter().enumerate() {
            let r = &lv[row * classes..(row + 1) * classes];
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (c, &v) in r.iter().enumerate() {
                let e = (v - max).exp();
                probs[row * classes + c] = e;
                sum += e;
            }
            for c in 0..classes {
                probs[row * classes + c] /= sum;
            }
            loss += sum.ln() + max - r[label];
        }
        drop(lv);
        loss /= n as f64;
        let out = self.output("cross_entropy", &[], vec![loss])?;
        self.push(Record::CrossEntropy {
            logits: logits.clone(),
            labels: labels.to_vec(),
            probs,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, x: &Tensor) -> Result<Tensor> {
        let total: f64 = x.data().iter().sum();
        let out = self.output("sum", &[], vec![total])?;
        self.push(Record::Sum { x: x.clone(), out: out.clone() });
        Ok(out)
    }

    /// Mean along `axis`, removing it from the shape.
    pub fn mean_axis(&self, x: &Tensor, axis: usize) -> Result<Tensor> {
        check_axis("mean_axis", axis, x.rank())?;
        let (outer, len, inner) = kernels::axis_split(x.shape(), axis);
        if len == 0 {
            return Err(TensorError::DegenerateBatch { op: "mean_axis" });
        }
        let xv = x.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    data[o * inner + i] += xv[base + i];
                }
            }
        }
        drop(xv);
        let scale = 1.0 / len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let out = self.output("mean_axis", &shape, data)?;
        self.push(Record::MeanAxis { x: x.clone(), axis, out: out.clone() });
        Ok(out)
    }

    /// Same data, new shape (element counts must agree). Copies.
    pub fn reshape(&self, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
        let n = crate::tensor::element_count(shape)?;
        if n != x.len() {
            return Err(shape_err("reshape", format!("{:?} -> {:?}", x.shape(), shape)));
        }
        let out = self.output("reshape", shape, x.to_vec())?;
        self.push(Record::Reshape { x: x.clone(), out: out.clone() });
        Ok(out)
    }

    /// Reorder axes: output axis `k` takes input axis `perm[k]`.
    pub fn permute(&self, x: &Tensor, perm: &[usize]) -> Result<Tensor> {
        let rank = x.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err("permute", format!("perm {perm:?} for rank {rank}")));
        }
        let in_shape = x.shape();
        let mut in_strides = vec![1usize; rank];
        for a in (0..rank.saturating_sub(1)).rev() {
            in_strides[a] = in_strides[a + 1] * in_shape[a + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let sperm: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let xv = x.data();
        let mut data = vec![0.0; xv.len()];
        let mut idx = vec![0usize; rank];
        let mut in_flat = 0usize;
        for slot in data.iter_mut() {
            *slot = xv[in_flat];
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
        drop(xv);
        let out = self.output("permute", &out_shape, data)?;
        self.push(Record::Permute { x: x.clone(), perm: perm.to_vec(), out: out.clone() });
        Ok(out)
    }

    /// Concatenate along `axis`; shapes must agree elsewhere.
    pub fn concat(&self, xs: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = xs.first().ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        check_axis("concat", axis, first.rank())?;
        let mut total = 0usize;
        for x in xs {
            if x.rank() != first.rank() {
                return Err(shape_err("concat", "rank mismatch".into()));
            }
            for (a, (&ea, &eb)) in x.shape().iter().zip(first.shape()).enumerate() {
                if a != axis && ea != eb {
                    return Err(shape_err("concat", format!("{:?} vs {:?}", x.shape(), first.shape())));
                }
            }
            total += x.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total;
        let (outer, _, inner) = kernels::axis_split(&out_shape, axis);
        let mut data = vec![0.0; outer * total * inner];
        let mut offset = 0usize;
        for x in xs {
            let len = x.shape()[axis];
            let xv = x.data();
            for o in 0..outer {
                for j in 0..len {
                    let src = (o * len + j) * inner;
                    let dst = (o * total + offset + j) * inner;
                    data[dst..dst + inner].copy_from_slice(&xv[src..src + inner]);
                }
            }
            offset += len;
        }
        let out = self.output("concat", &out_shape, data)?;
        self.push(Record::Concat { xs: xs.to_vec(), axis, out: out.clone() });
        Ok(out)
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&self, x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis("slice", axis, x.rank())?;
        let full = x.shape()[axis];
        if len == 0 || start + len > full {
            return Err(shape_err("slice", format!("[{start}, {}) of extent {full}", start + len)));
        }
        let (outer, _, inner) = kernels::axis_split(x.shape(), axis);
        let xv = x.data();
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = (o * full + start + j) * inner;
                let dst = (o * len + j) * inner;
                data[dst..dst + inner].copy_from_slice(&xv[src..src + inner]);
            }
        }
        drop(xv);
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let out = self.output("slice", &shape, data)?;
        self.push(Record::Slice { x: x.clone(), axis, start, out: out.clone() });
        Ok(out)
    }

    /// Per-timestep gating: out[b,t,f] = x[b,t,f] · gate[t] for x `[b,t,f]`
    /// and gate `[t]`.
    pub fn time_gate(&self, x: &Tensor, gate: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || gate.rank() != 1 || gate.shape()[0] != x.shape()[1] {
            return Err(shape_err(
                "time_gate",
                format!("x {:?} vs gate {:?}", x.shape(), gate.shape()),
            ));
        }
        let (batch, steps, feat) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let xv = x.data();
        let gv = gate.data();
        let mut data = vec![0.0; xv.len()];
        for b in 0..batch {
            for t in 0..steps {
                let base = (b * steps + t) * feat;
                let g = gv[t];
                for f in 0..feat {
                    data[base + f] = xv[base + f] * g;
                }
            }
        }
        drop((xv, gv));
        let out = self.output("time_gate", x.shape(), data)?;
        self.push(Record::TimeGate { x: x.clone(), gate: gate.clone(), out: out.clone() });
        Ok(out)
    }
}
