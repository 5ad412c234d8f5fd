use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one run seed. Draws on one
/// stream never shift another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Mobility = 1,
    RadioLoss = 2,
    Adversary = 3,
    Timers = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prng {
    seed: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, s: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(s as u64);
        rng
    }
}
