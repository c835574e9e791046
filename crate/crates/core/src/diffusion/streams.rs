use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed of locus `l`'s stream family. Locus 0 keeps the base seed, so a
/// single-locus run seeded with `locus_seed(seed, l)` reproduces the noise
/// locus `l` receives in a multi-locus run.
pub fn locus_seed(seed: u64, locus: usize) -> u64 {
    if locus == 0 {
        return seed;
    }
    // splitmix64 finalizer over the (seed, locus) pair
    let mut z = seed ^ (locus as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random streams, one per locus, for one trajectory.
#[derive(Debug, Clone)]
pub struct LocusStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl LocusStreams {
    pub fn new(seed: u64, trajectory: u64, loci: usize) -> Self {
        let rngs = (0..loci)
            .map(|l| {
                let mut r = ChaCha8Rng::seed_from_u64(locus_seed(seed, l));
                r.set_stream(trajectory);
                r
            })
            .collect();
        Self { rngs }
    }

    pub fn locus(&mut self, l: usize) -> &mut ChaCha8Rng {
        &mut self.rngs[l]
    }

    pub fn loci(&self) -> usize {
        self.rngs.len()
    }
}
