//! Seeded sampling helpers. ChaCha8 is used everywhere so that streams are
//! stable across platforms and releases.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard normal via Box-Muller. Two uniforms are consumed per call, which
/// keeps the stream position a pure function of the call count.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let mut u1: f64 = rng.gen();
    // gen() returns [0, 1); ln(0) would be -inf.
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + u * (hi - lo)
}
