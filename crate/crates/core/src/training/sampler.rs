use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// Sampling with replacement where each item is weighted by the inverse of
/// its class frequency, so both classes are drawn equally often in
/// expectation.
#[derive(Clone, Debug)]
pub struct WeightedSampler {
    dist: WeightedIndex<f64>,
    len: usize,
}

impl WeightedSampler {
    pub fn new(labels: &[bool]) -> Result<Self> {
        let pos = labels.iter().filter(|&&l| l).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::Validation(format!(
                "weighted sampling needs both classes, got {pos} positive and {neg} negative"
            )));
        }
        let weights: Vec<f64> = labels
            .iter()
            .map(|&l| if l { 1.0 / pos as f64 } else { 1.0 / neg as f64 })
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Validation(e.to_string()))?;
        Ok(Self {
            dist,
            len: labels.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.dist.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn rare_positives_are_drawn_half_the_time() {
        // 8 positives in 1000 items.
        let labels: Vec<bool> = (0..1000).map(|i| i % 125 == 0).collect();
        let s = WeightedSampler::new(&labels).unwrap();
        let draws = s.sample(100_000, &mut ChaCha8Rng::seed_from_u64(1));
        let frac = draws.iter().filter(|&&i| labels[i]).count() as f64 / draws.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn balanced_is_uniform_and_seeded() {
        let labels = [true, false, true, false];
        let s = WeightedSampler::new(&labels).unwrap();
        let draws = s.sample(40_000, &mut ChaCha8Rng::seed_from_u64(2));
        for i in 0..4 {
            let c = draws.iter().filter(|&&d| d == i).count() as f64 / 40_000.0;
            assert!((c - 0.25).abs() < 0.01);
        }
        assert_eq!(
            s.sample(50, &mut ChaCha8Rng::seed_from_u64(3)),
            s.sample(50, &mut ChaCha8Rng::seed_from_u64(3))
        );
        assert!(WeightedSampler::new(&[true, true]).is_err());
        assert!(WeightedSampler::new(&[]).is_err());
    }
}
