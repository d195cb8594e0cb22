//! Seeded random streams and the multinomial sampler shared by the
//! resampling and simulation code.
//!
//! Every stream is ChaCha20 keyed by the user seed with the stream id set to
//! a partition index, so partitions can run on any thread in any order and
//! still reproduce the same draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};

pub type StreamRng = ChaCha20Rng;

/// Independent substream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a `Mult(n, p)` count vector by sequential binomial conditioning:
/// `x_k ~ Bin(n − Σ_{j<k} x_j, p_k / Σ_{j≥k} p_j)`, with the last cell
/// taking the remainder.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: &[f64; 4]) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass: f64 = p.iter().sum();
    for k in 0..3 {
        if remaining == 0 {
            break;
        }
        let q = if mass > 0.0 {
            (p[k] / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .expect("binomial parameters are valid")
                .sample(rng)
        };
        out[k] = draw;
        remaining -= draw;
        mass -= p[k];
    }
    out[3] = remaining;
    out
}

/// One Bernoulli trial.
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}
