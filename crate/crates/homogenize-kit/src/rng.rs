//! Counter-based Gaussian increments for reproducible parallel Monte Carlo.
//!
//! Every Brownian increment is addressable by `(seed, path, step)`: the seed
//! keys a ChaCha8 stream cipher, the path index selects the stream, and the
//! step index selects the word position inside the stream. Draws therefore
//! do not depend on scheduling or worker count, and any single increment can
//! be regenerated in isolation.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// Recorded in output metadata so reruns can verify the generator.
pub const RNG_ALGORITHM: &str = "chacha8-ctr/box-muller-v1";

/// Normal draws for one path. Each step consumes a fixed number of stream
/// words, so step `i` always starts at word `i * words_per_step` regardless
/// of how previous steps were consumed.
pub struct PathRng {
    rng: ChaCha8Rng,
    words_per_step: u128,
    k: usize,
}

impl PathRng {
    pub fn new(seed: u64, path: u64, k: usize) -> PathRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&0x686f6d6f67656e69u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path);
        // Box-Muller consumes one u64 (two 32-bit words) per uniform and two
        // uniforms per pair of normals.
        let pairs = k.div_ceil(2);
        PathRng { rng, words_per_step: (pairs as u128) * 4, k }
    }

    /// Fills `out` (length `k`) with independent standard normal draws for
    /// the given step.
    pub fn standard_normals(&mut self, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.k);
        self.rng.set_word_pos(step as u128 * self.words_per_step);
        let mut i = 0;
        while i < self.k {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            out[i] = z0;
            if i + 1 < self.k {
                out[i + 1] = z1;
            }
            i += 2;
        }
    }
}

/// Two standard normals from two uniform words via the Box-Muller transform.
/// Unlike rejection samplers this consumes a fixed word count, which the
/// counter addressing above relies on.
fn box_muller(w0: u64, w1: u64) -> (f64, f64) {
    // u1 in (0, 1]: guards the logarithm. u2 in [0, 1).
    let u1 = ((w0 >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0);
    let u2 = (w1 >> 11) as f64 * (1.0 / 9007199254740992.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Uniform draws in `[lo, hi)` for sampling-based validation checks; same
/// cipher, sequential consumption.
pub struct SampleRng {
    rng: ChaCha8Rng,
}

impl SampleRng {
    pub fn new(seed: u64) -> SampleRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&0x76616c6964617465u64.to_le_bytes());
        SampleRng { rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        lo + u * (hi - lo)
    }

    pub fn standard_normal(&mut self) -> f64 {
        box_muller(self.rng.next_u64(), self.rng.next_u64()).0
    }

    /// Uniformly distributed direction on the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim.div_ceil(2) {
                let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
                v.push(z0);
                if v.len() < dim {
                    v.push(z1);
                }
            }
            v.truncate(dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for x in &mut v {
                    *x /= norm;
                }
                return v;
            }
        }
    }
}
