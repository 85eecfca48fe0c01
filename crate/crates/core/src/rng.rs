//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes a `u64` seed and derives an independent
//! ChaCha12 stream per (trial, lane). Work sharded across threads therefore
//! reproduces the single-threaded output bit for bit, and thread count is a
//! pure performance knob.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream `stream_id` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream for a (trial, lane) pair; lanes separate independent draws inside
/// one trial (e.g. the rows of a random matrix).
pub fn trial_stream(seed: u64, trial: u32, lane: u32) -> ChaCha12Rng {
    stream(seed, ((trial as u64) << 32) | lane as u64)
}

/// Uniform on [-1/2, 1/2).
pub fn unit_centered<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>() - 0.5
}

/// Standard normal via Box-Muller; consumes two uniforms per call.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Exp(1) variate.
pub fn exponential<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

/// Uniform direction on the Euclidean unit sphere in R^dim.
pub fn unit_sphere<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    assert!(dim >= 1);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let n = crate::linalg::norm2(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
