use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Fixed set of data items and their sizes (in data units).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemCatalog {
    sizes: Vec<f64>,
    s_min: f64,
    s_max: f64,
}

impl ItemCatalog {
    pub fn new(sizes: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Invalid("catalog must contain at least one item".into()));
        }
        if let Some((m, s)) = sizes
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::Invalid(format!(
                "item {m} has size {s}; sizes must be positive and finite"
            )));
        }
        let s_min = sizes.iter().copied().fold(f64::INFINITY, f64::min);
        let s_max = sizes.iter().copied().fold(0.0, f64::max);
        Ok(Self { sizes, s_min, s_max })
    }

    /// Sizes drawn i.i.d. uniform on `[low, high]` from a seeded stream.
    pub fn uniform(count: usize, low: f64, high: f64, seed: u64) -> Result<Self> {
        if !(low > 0.0 && high >= low && high.is_finite()) {
            return Err(Error::Invalid(format!(
                "uniform size range [{low}, {high}] must satisfy 0 < low <= high < inf"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = (0..count)
            .map(|_| if high > low { rng.gen_range(low..=high) } else { low })
            .collect();
        Self::new(sizes)
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn size(&self, m: usize) -> f64 {
        self.sizes[m]
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// Indices of the items whose size equals `s_min`.
    pub fn smallest_items(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == self.s_min)
            .map(|(m, _)| m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_are_cached() {
        let c = ItemCatalog::new(vec![3.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.s_min(), 2.0);
        assert_eq!(c.s_max(), 4.0);
        assert_eq!(c.smallest_items(), vec![1]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(ItemCatalog::new(vec![]).is_err());
        assert!(ItemCatalog::new(vec![1.0, 0.0]).is_err());
        assert!(ItemCatalog::new(vec![f64::INFINITY]).is_err());
        assert!(ItemCatalog::new(vec![-1.0]).is_err());
    }

    #[test]
    fn uniform_sizes_are_seeded_and_in_range() {
        let a = ItemCatalog::uniform(50, 10.0, 30.0, 7).unwrap();
        let b = ItemCatalog::uniform(50, 10.0, 30.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.sizes().iter().all(|s| (10.0..=30.0).contains(s)));
        assert_ne!(a, ItemCatalog::uniform(50, 10.0, 30.0, 8).unwrap());
    }
}
