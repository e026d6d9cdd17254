//! Forward/backward compute kernels shared by the tape ops. Convolutions go
//! through im2col + GEMM; each output element accumulates its reduction in
//! the same (channel, kernel-offset) order as a naive nested loop, so the two
//! routes agree to the last bit on exact inputs.

use crate::linalg;

/// Output extent along one axis, or None when non-positive.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// How out-of-range taps read the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadMode {
    /// Padded taps read zero.
    #[default]
    Zeros,
    /// Padded taps clamp to the nearest edge sample, so a constant signal
    /// stays exactly constant through the convolution.
    Replicate,
}

/// Geometry of one convolution: batch-free shapes plus stride/pad per axis.
#[derive(Debug, Clone)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub in_dims: Vec<usize>,
    pub k_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub stride: Vec<usize>,
    pub pad: Vec<usize>,
    pub pad_mode: PadMode,
}

impl ConvGeom {
    pub fn in_size(&self) -> usize {
        self.cin * self.in_dims.iter().product::<usize>()
    }
    pub fn out_size(&self) -> usize {
        self.cout * self.patch_count()
    }
    pub fn patch_count(&self) -> usize {
        self.out_dims.iter().product()
    }
    pub fn col_rows(&self) -> usize {
        self.cin * self.k_dims.iter().product::<usize>()
    }
}


#[inline]
fn resolve(coord: isize, extent: usize, mode: PadMode) -> Option<usize> {
    if coord >= 0 && (coord as usize) < extent {
        Some(coord as usize)
    } else {
        match mode {
            PadMode::Zeros => None,
            PadMode::Replicate => Some(coord.clamp(0, extent as isize - 1) as usize),
        }
    }
}

/// Unfold one batch item into `[col_rows, patch_count]`, zero-filling padded
/// taps. Row order matches the flattened weight layout `[cin, k...]`.
pub fn im2col(geom: &ConvGeom, input: &[f64], cols: &mut [f64]) {
    cols.fill(0.0);
    let p = geom.patch_count();
    match geom.in_dims.len() {
        1 => {
            let l = geom.in_dims[0];
            let k = geom.k_dims[0];
            let (s, pd) = (geom.stride[0], geom.pad[0] as isize);
            for ci in 0..geom.cin {
                let chan = &input[ci * l..(ci + 1) * l];
                for kx in 0..k {
                    let row = &mut cols[(ci * k + kx) * p..(ci * k + kx + 1) * p];
                    for (ox, dst) in row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pd;
                        if let Some(ix) = resolve(ix, l, geom.pad_mode) {
                            *dst = chan[ix];
                        }
                    }
                }
            }
        }
        2 => {
            let (h, w) = (geom.in_dims[0], geom.in_dims[1]);
            let (kh, kw) = (geom.k_dims[0], geom.k_dims[1]);
            let (sh, sw) = (geom.stride[0], geom.stride[1]);
            let (ph, pw) = (geom.pad[0] as isize, geom.pad[1] as isize);
            let (oh, ow) = (geom.out_dims[0], geom.out_dims[1]);
            for ci in 0..geom.cin {
                let chan = &input[ci * h * w..(ci + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let r = (ci * kh + ky) * kw + kx;
                        let row = &mut cols[r * p..(r + 1) * p];
                        for oy in 0..oh {
                            let iy = match resolve((oy * sh + ky) as isize - ph, h, geom.pad_mode) {
                                Some(v) => v,
                                None => continue,
                            };
                            let src = &chan[iy * w..(iy + 1) * w];
                            let dst = &mut row[oy * ow..(oy + 1) * ow];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * sw + kx) as isize - pw;
                                if let Some(ix) = resolve(ix, w, geom.pad_mode) {
                                    *d = src[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        3 => {
            let (t, h, w) = (geom.in_dims[0], geom.in_dims[1], geom.in_dims[2]);
            let (kt, kh, kw) = (geom.k_dims[0], geom.k_dims[1], geom.k_dims[2]);
            let (st, sh, sw) = (geom.stride[0], geom.stride[1], geom.stride[2]);
            let (pt, ph, pw) = (geom.pad[0] as isize, geom.pad[1] as isize, geom.pad[2] as isize);
            let (ot, oh, ow) = (geom.out_dims[0], geom.out_dims[1], geom.out_dims[2]);
            for ci in 0..geom.cin {
                let chan = &input[ci * t * h * w..(ci + 1) * t * h * w];
                for kz in 0..kt {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let r = ((ci * kt + kz) * kh + ky) * kw + kx;
                            let row = &mut cols[r * p..(r + 1) * p];
                            for oz in 0..ot {
                                let iz = match resolve((oz * st + kz) as isize - pt, t, geom.pad_mode) {
                                    Some(v) => v,
                                    None => continue,
                                };
                                for oy in 0..oh {
                                    let iy = match resolve((oy * sh + ky) as isize - ph, h, geom.pad_mode) {
                                        Some(v) => v,
                                        None => continue,
                                    };
                                    let base = (iz * h + iy) * w;
                                    let src = &chan[base..base + w];
                                    let dst = &mut row[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                                    for (ox, d) in dst.iter_mut().enumerate() {
                                        let ix = (ox * sw + kx) as isize - pw;
                                        if let Some(ix) = resolve(ix, w, geom.pad_mode) {
                                            *d = src[ix];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        r => unreachable!("unsupported conv rank {r}"),
    }
}

/// Scatter-add the column gradient back onto the input gradient of one batch
/// item. Exact adjoint of [`im2col`]. Kept serial: overlapping taps write to
/// the same input cell.
pub fn col2im_acc(geom: &ConvGeom, cols: &[f64], dinput: &mut [f64]) {
    let p = geom.patch_count();
    let rank = geom.in_dims.len();
    let mut out_idx = vec![0usize; rank];
    for r in 0..geom.col_rows() {
        // Decompose r into (ci, kernel offsets).
        let mut rem = r;
        let mut koff = vec![0usize; rank];
        for a in (0..rank).rev() {
            koff[a] = rem % geom.k_dims[a];
            rem /= geom.k_dims[a];
        }
        let ci = rem;
        let chan_size: usize = geom.in_dims.iter().product();
        let chan = &mut dinput[ci * chan_size..(ci + 1) * chan_size];
        out_idx.fill(0);
        for pi in 0..p {
            let v = cols[r * p + pi];
            if v != 0.0 {
                let mut in_flat = 0usize;
                let mut valid = true;
                for a in 0..rank {
                    let coord = (out_idx[a] * geom.stride[a] + koff[a]) as isize - geom.pad[a] as isize;
                    match resolve(coord, geom.in_dims[a], geom.pad_mode) {
                        Some(c) => in_flat = in_flat * geom.in_dims[a] + c,
                        None => {
                            valid = false;
                            break;
                        }
                    }
                }
                if valid {
                    chan[in_flat] += v;
                }
            }
            // Advance the output multi-index.
            for a in (0..rank).rev() {
                out_idx[a] += 1;
                if out_idx[a] < geom.out_dims[a] {
                    break;
                }
                out_idx[a] = 0;
            }
        }
    }
}

/// Forward convolution over a batch: `input` `[b, cin, in_dims...]`,
/// `weight` `[cout, cin, k_dims...]`, `bias` `[cout]`.
pub fn conv_forward(geom: &ConvGeom, batch: usize, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let p = geom.patch_count();
    let k = geom.col_rows();
    let mut cols = vec![0.0; k * p];
    let mut out = vec![0.0; batch * geom.out_size()];
    for b in 0..batch {
        let item = &input[b * geom.in_size()..(b + 1) * geom.in_size()];
        im2col(geom, item, &mut cols);
        let dst = &mut out[b * geom.out_size()..(b + 1) * geom.out_size()];
        linalg::gemm_acc(geom.cout, k, p, weight, &cols, dst);
        for (co, chunk) in dst.chunks_exact_mut(p).enumerate() {
            let bv = bias[co];
            for o in chunk.iter_mut() {
                *o += bv;
            }
        }
    }
    out
}

/// Backward convolution: returns (dinput, dweight, dbias).
pub fn conv_backward(
    geom: &ConvGeom,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = geom.patch_count();
    let k = geom.col_rows();
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    let mut dinput = vec![0.0; batch * geom.in_size()];
    let mut dweight = vec![0.0; geom.cout * k];
    let mut dbias = vec![0.0; geom.cout];
    for b in 0..batch {
        let item = &input[b * geom.in_size()..(b + 1) * geom.in_size()];
        let dout_b = &dout[b * geom.out_size()..(b + 1) * geom.out_size()];
        im2col(geom, item, &mut cols);
        // dW += dOut · colsᵀ
        linalg::gemm_acc_nt(geom.cout, p, k, dout_b, &cols, &mut dweight);
        // dcols = Wᵀ · dOut
        dcols.fill(0.0);
        linalg::gemm_acc_tn(k, geom.cout, p, weight, dout_b, &mut dcols);
        col2im_acc(geom, &dcols, &mut dinput[b * geom.in_size()..(b + 1) * geom.in_size()]);
        for (co, chunk) in dout_b.chunks_exact(p).enumerate() {
            dbias[co] += chunk.iter().sum::<f64>();
        }
    }
    (dinput, dweight, dbias)
}

/// Row-major view decomposition around `axis`: (outer, len, inner).
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Numerically stabilized softmax along `axis`.
pub fn softmax(shape: &[usize], axis: usize, x: &[f64]) -> Vec<f64> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let mut max = f64::NEG_INFINITY;
            for j in 0..len {
                max = max.max(x[idx(j)]);
            }
            let mut sum = 0.0;
            for j in 0..len {
                let e = (x[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[idx(j)] /= sum;
            }
        }
    }
    out
}

/// Softmax VJP: dx = s ⊙ (dy − <dy, s>) per slice.
pub fn softmax_backward(shape: &[usize], axis: usize, s: &[f64], dy: &[f64]) -> Vec<f64> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut dx = vec![0.0; s.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let mut dot = 0.0;
            for j in 0..len {
                dot += dy[idx(j)] * s[idx(j)];
            }
            for j in 0..len {
                dx[idx(j)] = s[idx(j)] * (dy[idx(j)] - dot);
            }
        }
    }
    dx
}
