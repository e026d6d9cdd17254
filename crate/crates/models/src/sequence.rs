//! Sequence labelling: average the per-timestep class probabilities over the
//! clip and take the argmax, ties to the lowest class index.

use crate::error::{ModelError, Result};

/// `probs` is `[t, c]` row-major; every row must sum to 1 within 1e-6.
/// Returns (label, mean probability of that label).
pub fn classify_sequence(probs: &[f64], steps: usize, classes: usize) -> Result<(usize, f64)> {
    if steps == 0 || classes == 0 || probs.len() != steps * classes {
        return Err(ModelError::Probability(format!(
            "grid {steps}x{classes} does not match {} values",
            probs.len()
        )));
    }
    for t in 0..steps {
        let row = &probs[t * classes..(t + 1) * classes];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::Probability(format!("row {t} sums to {sum}")));
        }
    }
    let mut best = 0usize;
    let mut best_mean = f64::NEG_INFINITY;
    for c in 0..classes {
        let mean = (0..steps).map(|t| probs[t * classes + c]).sum::<f64>() / steps as f64;
        if mean > best_mean {
            best_mean = mean;
            best = c;
        }
    }
    Ok((best, best_mean))
}
