//! Quantum projection noise: binomial sampling of fringe points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

use super::Fringe;

/// Generator for point `index` of draw `iteration` under `seed`.
///
/// Streams are independent per `(seed, iteration, index)`, so results do not
/// depend on the order or thread in which points are sampled.
pub fn point_rng(seed: u64, iteration: u64, index: u64) -> ChaCha8Rng {
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    seed_bytes[8..16].copy_from_slice(&iteration.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed_bytes);
    rng.set_stream(index);
    rng
}

/// Replaces each `f_k` by `m_k/M` with `m_k ~ Binomial(M, f_k)`.
pub fn sample_projection_noise(fringe: &Fringe, trials: u32, seed: u64) -> Result<Fringe> {
    sample_projection_noise_stream(fringe, trials, seed, 0)
}

/// [`sample_projection_noise`] for the `iteration`-th independent draw.
pub fn sample_projection_noise_stream(fringe: &Fringe, trials: u32, seed: u64, iteration: u64) -> Result<Fringe> {
    if trials < 1 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let m = trials as f64;
    let p_d = fringe
        .p_d()
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let dist = Binomial::new(trials as u64, f.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidParameter(format!("binomial sampling: {e}")))?;
            let mut rng = point_rng(seed, iteration, k as u64);
            Ok(dist.sample(&mut rng) as f64 / m)
        })
        .collect::<Result<Vec<f64>>>()?;
    Fringe::new(fringe.phases().to_vec(), p_d, trials)
}
