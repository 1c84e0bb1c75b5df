//! Riemann zeta on the real axis `s > 1` by Euler-Maclaurin summation.

use crate::error::{Error, Result};

// B_{2k} / (2k)! for k = 1..8.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

const HEAD_TERMS: usize = 10;

/// `zeta(s)` for real `s > 1`, accurate to a few ulps for `s >= 2`.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::InvalidParam(format!("zeta needs s > 1, got {s}")));
    }
    if s > 60.0 {
        // 1 + 2^-s + 3^-s is already exact to double precision
        return Ok(1.0 + 2f64.powf(-s) + 3f64.powf(-s));
    }
    let n = HEAD_TERMS as f64;
    // smallest terms first
    let mut head = 0.0;
    for k in (1..HEAD_TERMS).rev() {
        head += (k as f64).powf(-s);
    }
    let n_pow = n.powf(-s);
    let mut tail = n * n_pow / (s - 1.0) + 0.5 * n_pow;
    // rising factorial s (s+1) ... (s+2k-2) times N^{-s-2k+1}
    let mut rising = s;
    let mut power = n_pow / n;
    for (k, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        tail += c * rising * power;
        let m = 2.0 * k as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        power /= n * n;
    }
    Ok(head + tail)
}
