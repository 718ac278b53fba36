//! Seeded randomness with per-sample derived streams.
//!
//! Every sample `i` of a scan draws from its own generator seeded by
//! `derive_seed(seed, stream, i)`, so results do not depend on evaluation
//! order or thread count.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SampleRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed, a stream label and a sample index into one seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream.rotate_left(17)) ^ index)
}

pub fn sample_rng(seed: u64, stream: u64, index: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Stream labels for the different samplers, kept distinct so that
/// sub-scans sharing a seed draw independent numbers.
pub mod stream {
    pub const IDENTITIES: u64 = 1;
    pub const BOUNDEDNESS: u64 = 2;
    pub const RANK_ONE_CONVEXITY: u64 = 3;
    pub const RANK_ONE_HESSIAN: u64 = 4;
    pub const SMALL_DET: u64 = 5;
    pub const SPTNULL: u64 = 6;
    pub const SPTNULL_ORTHO: u64 = 7;
    pub const SPTNULL_M0: u64 = 8;
    pub const ORTHO_SPLIT: u64 = 9;
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Log-uniform draw on `[lo, hi]`, `0 < lo <= hi`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform direction on the unit sphere of `R^dim`.
pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| normal(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix2<f64> {
    rotation(uniform(rng, 0.0, std::f64::consts::TAU))
}

/// Random element of O(2): a rotation, composed with a reflection half of the time.
pub fn random_orthogonal2(rng: &mut impl Rng) -> Matrix2<f64> {
    let r = random_rotation(rng);
    if rng.random::<bool>() {
        r * Matrix2::new(1.0, 0.0, 0.0, -1.0)
    } else {
        r
    }
}

/// Random element of O(n) as a product of `n` Householder reflections.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::identity(n, n);
    for _ in 0..n {
        let v = unit_vector(rng, n);
        let h = DMatrix::<f64>::identity(n, n) - 2.0 * &v * v.transpose();
        q = h * q;
    }
    q
}
