//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Uniform draws on `[lo, hi)` for seeded test inputs.
pub struct Draws(ChaCha20Rng);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }
}

/// Net demand maximizing `a ln(b (p + g) + 1) - c p` over `p ≥ -g`, found by
/// bisection on the sign of the symmetric payoff difference. Uses payoff
/// evaluations only.
pub fn numeric_argmax(a: f64, b: f64, g: f64, c: f64) -> f64 {
    // Payoff difference across [x - h, x + h] in consumption, written with
    // ln_1p so it stays accurate for tiny h.
    let rising = |x: f64, h: f64| {
        let lo = (x - h).max(0.0);
        let hi = x + h;
        a * (b * (hi - lo) / (b * lo + 1.0)).ln_1p() - c * (hi - lo) > 0.0
    };
    let h = 1e-13;
    if !rising(h, h) {
        return -g;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while rising(hi, h) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if rising(mid, h * mid.max(1.0)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) - g
}

/// `(Σx)² / (m Σx²)` over the masked entries of `x`, written from scratch.
pub fn jain_reference(y: &[f64], mask: &[bool]) -> f64 {
    let (mut s1, mut s2, mut m) = (0.0, 0.0, 0.0);
    for (v, &z) in y.iter().zip(mask) {
        if z {
            s1 += v;
            s2 += v * v;
            m += 1.0;
        }
    }
    s1 * s1 / (m * s2)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}
