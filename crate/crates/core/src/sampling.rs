//! Seeded parameter valuations shared by tests, verification and benches.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ratfun::{ParamTable, Valuation};

/// Denominator of sampled values; numerators lie in `[11, 989]`, so every
/// value is strictly inside `(0.01, 0.99)`.
pub const SAMPLE_DENOMINATOR: u32 = 1000;

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn value(&mut self) -> BigRational {
        let n: u32 = self.rng.gen_range(11..=989);
        BigRational::new(BigInt::from(n), BigInt::from(SAMPLE_DENOMINATOR))
    }

    pub fn valuation(&mut self, n_params: usize) -> Valuation {
        Valuation::from_values((0..n_params).map(|_| self.value()).collect())
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// `count` valuations of every parameter of `params`, derived from `seed`.
pub fn valuations(params: &ParamTable, count: usize, seed: u64) -> Vec<Valuation> {
    let mut s = Sampler::new(seed);
    (0..count).map(|_| s.valuation(params.len())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};

    #[test]
    fn deterministic_and_in_range() {
        let t = ParamTable::from_names(["a", "b", "c"]);
        let a = valuations(&t, 50, 7);
        let b = valuations(&t, 50, 7);
        assert_eq!(a, b);
        assert_ne!(a, valuations(&t, 50, 8));
        for v in &a {
            for (_, x) in v.iter() {
                assert!(*x > BigRational::zero() && *x < BigRational::one());
            }
        }
    }
}
