//! Reference implementations used as independent oracles by the test suites.
//!
//! Everything in here is written in the most literal way possible (nested
//! loops over plain slices, no shared code with the production kernels) so
//! that agreement between an oracle and the real implementation is meaningful
//! evidence of correctness.

/// Naive cross-correlation conv1d. `input` is `[cin, l]`, `weight` is
/// `[cout, cin, k]`, `bias` is `[cout]`. Returns `[cout, lout]` row-major.
pub fn conv1d_naive(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    cin: usize,
    l: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let lout = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * lout];
    for co in 0..cout {
        for ox in 0..lout {
            let mut acc = 0.0;
            for ci in 0..cin {
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix >= 0 && (ix as usize) < l {
                        acc += input[ci * l + ix as usize] * weight[(co * cin + ci) * k + kx];
                    }
                }
            }
            out[co * lout + ox] = acc + bias[co];
        }
    }
    out
}

/// Naive conv2d. `input` is `[cin, h, w]`, `weight` is `[cout, cin, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_naive(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let hout = (h + 2 * pad - kh) / stride + 1;
    let wout = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; cout * hout * wout];
    for co in 0..cout {
        for oy in 0..hout {
            for ox in 0..wout {
                let mut acc = 0.0;
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                let iv = input[(ci * h + iy as usize) * w + ix as usize];
                                let wv = weight[((co * cin + ci) * kh + ky) * kw + kx];
                                acc += iv * wv;
                            }
                        }
                    }
                }
                out[(co * hout + oy) * wout + ox] = acc + bias[co];
            }
        }
    }
    out
}

/// Naive conv3d. `input` is `[cin, t, h, w]`, `weight` is
/// `[cout, cin, kt, kh, kw]`; per-axis stride and padding.
#[allow(clippy::too_many_arguments)]
pub fn conv3d_naive(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    cin: usize,
    dims: [usize; 3],
    cout: usize,
    kdims: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
) -> Vec<f64> {
    let [t, h, w] = dims;
    let [kt, kh, kw] = kdims;
    let odims: Vec<usize> = (0..3)
        .map(|a| (dims[a] + 2 * pad[a] - kdims[a]) / stride[a] + 1)
        .collect();
    let (ot, oh, ow) = (odims[0], odims[1], odims[2]);
    let mut out = vec![0.0; cout * ot * oh * ow];
    for co in 0..cout {
        for oz in 0..ot {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for kz in 0..kt {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iz = (oz * stride[0] + kz) as isize - pad[0] as isize;
                                    let iy = (oy * stride[1] + ky) as isize - pad[1] as isize;
                                    let ix = (ox * stride[2] + kx) as isize - pad[2] as isize;
                                    if iz >= 0
                                        && iy >= 0
                                        && ix >= 0
                                        && (iz as usize) < t
                                        && (iy as usize) < h
                                        && (ix as usize) < w
                                    {
                                        let iv = input[((ci * t + iz as usize) * h + iy as usize)
                                            * w
                                            + ix as usize];
                                        let wv = weight[(((co * cin + ci) * kt + kz) * kh + ky)
                                            * kw
                                            + kx];
                                        acc += iv * wv;
                                    }
                                }
                            }
                        }
                    }
                    out[((co * ot + oz) * oh + oy) * ow + ox] = acc + bias[co];
                }
            }
        }
    }
    out
}

/// Naive conv1d with replicate (edge-clamp) padding: out-of-range taps read
/// the nearest edge sample instead of zero.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_naive_replicate(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    cin: usize,
    l: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let lout = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * lout];
    for co in 0..cout {
        for ox in 0..lout {
            let mut acc = 0.0;
            for ci in 0..cin {
                for kx in 0..k {
                    let ix = ((ox * stride + kx) as isize - pad as isize)
                        .clamp(0, l as isize - 1) as usize;
                    acc += input[ci * l + ix] * weight[(co * cin + ci) * k + kx];
                }
            }
            out[co * lout + ox] = acc + bias[co];
        }
    }
    out
}

/// Weights for one GRU direction, laid out as plain matrices.
/// Input weights are `[f, h]` (input feature -> hidden), recurrent weights
/// `[h, h]`, biases `[h]`.
pub struct GruWeights<'a> {
    pub w_update: &'a [f64],
    pub u_update: &'a [f64],
    pub b_update: &'a [f64],
    pub w_reset: &'a [f64],
    pub u_reset: &'a [f64],
    pub b_reset: &'a [f64],
    pub w_cand: &'a [f64],
    pub u_cand: &'a [f64],
    pub b_cand: &'a [f64],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hand-unrolled single-direction GRU over a `[t, f]` sequence with zero
/// initial hidden state. Gate convention: update/reset sigmoid, candidate
/// tanh with the reset gate applied to the hidden state before the recurrent
/// candidate transform; new hidden = z*h + (1-z)*n. Returns `[t, h]`.
pub fn gru_unroll(x: &[f64], t: usize, f: usize, h: usize, w: &GruWeights) -> Vec<f64> {
    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; t * h];
    let matvec = |m: &[f64], rows: usize, cols: usize, v: &[f64], dst: &mut [f64]| {
        for c in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += v[r] * m[r * cols + c];
            }
            dst[c] = acc;
        }
    };
    for step in 0..t {
        let xt = &x[step * f..(step + 1) * f];
        let mut zi = vec![0.0; h];
        let mut zh = vec![0.0; h];
        let mut ri = vec![0.0; h];
        let mut rh = vec![0.0; h];
        matvec(w.w_update, f, h, xt, &mut zi);
        matvec(w.u_update, h, h, &hidden, &mut zh);
        matvec(w.w_reset, f, h, xt, &mut ri);
        matvec(w.u_reset, h, h, &hidden, &mut rh);
        let z: Vec<f64> = (0..h)
            .map(|j| sigmoid(zi[j] + zh[j] + w.b_update[j]))
            .collect();
        let r: Vec<f64> = (0..h)
            .map(|j| sigmoid(ri[j] + rh[j] + w.b_reset[j]))
            .collect();
        let gated: Vec<f64> = (0..h).map(|j| r[j] * hidden[j]).collect();
        let mut ni = vec![0.0; h];
        let mut nh = vec![0.0; h];
        matvec(w.w_cand, f, h, xt, &mut ni);
        matvec(w.u_cand, h, h, &gated, &mut nh);
        let cand: Vec<f64> = (0..h)
            .map(|j| (ni[j] + nh[j] + w.b_cand[j]).tanh())
            .collect();
        for j in 0..h {
            hidden[j] = z[j] * hidden[j] + (1.0 - z[j]) * cand[j];
            out[step * h + j] = hidden[j];
        }
    }
    out
}

/// Average-then-argmax sequence labelling, written independently of the
/// model code. `probs` is `[t, c]` row-major. Ties break to the lowest index.
pub fn classify_by_average(probs: &[f64], t: usize, c: usize) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_mean = f64::NEG_INFINITY;
    for class in 0..c {
        let mut acc = 0.0;
        for step in 0..t {
            acc += probs[step * c + class];
        }
        let mean = acc / t as f64;
        if mean > best_mean {
            best_mean = mean;
            best = class;
        }
    }
    (best, best_mean)
}

/// Nearest-template classification by L2 distance. Returns the index of the
/// closest template.
pub fn nearest_template(sample: &[f64], templates: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, tmpl) in templates.iter().enumerate() {
        let d: f64 = sample
            .iter()
            .zip(tmpl.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Plain affine + row softmax, for checking the per-timestep classifier.
/// `x` is `[n, fin]`, `w` is `[fin, c]`, `b` is `[c]`. Returns `[n, c]`.
pub fn affine_softmax(x: &[f64], w: &[f64], b: &[f64], n: usize, fin: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for row in 0..n {
        let logits: Vec<f64> = (0..c)
            .map(|j| {
                let mut acc = b[j];
                for i in 0..fin {
                    acc += x[row * fin + i] * w[i * c + j];
                }
                acc
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..c {
            out[row * c + j] = exps[j] / sum;
        }
    }
    out
}
