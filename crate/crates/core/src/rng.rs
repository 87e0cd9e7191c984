use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stochastic step, so runs are reproducible from a seed.
pub type TrainRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TrainRng {
    ChaCha8Rng::seed_from_u64(seed)
}
