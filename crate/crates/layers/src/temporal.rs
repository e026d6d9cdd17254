//! Temporal reshaping helpers shared by the stream models.

use avsr_autodiff::{Result, Tape, Tensor, TensorError};

/// Near-equal contiguous segment boundaries partitioning `len` into `count`
/// spans; span lengths differ by at most one and cover the whole range.
pub fn segment_bounds(len: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|i| (i * len / count, (i + 1) * len / count))
        .collect()
}

/// Average a `[b, f, l]` sequence into exactly `steps` spans -> `[b, steps, f]`.
pub fn segment_mean(tape: &Tape, x: &Tensor, steps: usize) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "segment_mean",
            detail: format!("expected [b,f,l], got {:?}", x.shape()),
        });
    }
    let len = x.shape()[2];
    if len < steps {
        return Err(TensorError::ShapeMismatch {
            op: "segment_mean",
            detail: format!("sequence length {len} shorter than {steps} segments"),
        });
    }
    let (b, f) = (x.shape()[0], x.shape()[1]);
    let mut pieces = Vec::with_capacity(steps);
    for (lo, hi) in segment_bounds(len, steps) {
        let span = tape.slice(x, 2, lo, hi - lo)?;
        let mean = tape.mean_axis(&span, 2)?; // [b, f]
        pieces.push(tape.reshape(&mean, &[b, 1, f])?);
    }
    tape.concat(&pieces, 1)
}

/// Fold the time axis of `[b, c, t, h, w]` into the batch -> `[b*t, c, h, w]`.
pub fn fold_time(tape: &Tape, x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if x.rank() != 5 {
        return Err(TensorError::ShapeMismatch {
            op: "fold_time",
            detail: format!("expected [b,c,t,h,w], got {s:?}"),
        });
    }
    let (b, c, t, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let perm = tape.permute(x, &[0, 2, 1, 3, 4])?;
    tape.reshape(&perm, &[b * t, c, h, w])
}

/// Inverse of folding after per-frame feature extraction:
/// `[b*t, f]` -> `[b, t, f]`.
pub fn unfold_time(tape: &Tape, x: &Tensor, batch: usize, steps: usize) -> Result<Tensor> {
    let f = x.shape()[1];
    tape.reshape(x, &[batch, steps, f])
}
