//! Counter-based splitting of a single 64-bit seed into independent streams.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Stream `(a, b)` of `seed`; distinct pairs give non-overlapping ChaCha streams.
pub fn stream(seed: u64, a: u32, b: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((a as u64) << 32) | b as u64);
    rng
}

/// A uniform draw on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        // 53 random bits, shifted off zero
        let v = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        if v > 0.0 && v < 1.0 {
            return v;
        }
    }
}
