use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Seeded uniform train/test partition of `n` window indices.
/// The test set holds `round(test_fraction · n)` windows; both index lists are sorted.
pub fn split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 windows to split, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_corpus_split() {
        let (train, test) = split(2950, 0.10, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2655, 295));
        assert_eq!(split(2950, 0.10, 1).unwrap(), (train, test));
        assert_ne!(split(2950, 0.10, 2).unwrap().1, split(2950, 0.10, 1).unwrap().1);
    }

    #[test]
    fn too_few_windows() {
        assert!(split(9, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_exhaustive_and_proportional(n in 10usize..500, seed in any::<u64>(), frac in 0.0f64..0.9) {
            let (train, test) = split(n, frac, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!((test.len() as f64 - frac * n as f64).abs() <= 1.0);
        }
    }
}
