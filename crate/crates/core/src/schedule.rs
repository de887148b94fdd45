use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded per-epoch permutation of `0..n`, cut into batches.
#[derive(Debug, Clone)]
pub struct Shuffler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch_size: usize,
}

impl Shuffler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Shuffler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            batch_size: batch_size.max(1),
        }
    }

    /// Reshuffles and returns the epoch's batches, in order.
    pub fn next_epoch(&mut self) -> std::slice::Chunks<'_, usize> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size)
    }
}
