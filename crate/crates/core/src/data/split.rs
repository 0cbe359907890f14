use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Train/validation/test fractions. The default keeps 20% for testing and
/// 10% of the remainder for validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.72,
            val: 0.08,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(
                    format!("split.{name}"),
                    format!("{v} is outside [0, 1]"),
                ));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "split",
                format!("ratios train+val+test must sum to 1, got {sum}"),
            ));
        }
        Ok(())
    }
}

/// Seeded partition into `(train, val, test)`. Bags keep their original
/// relative order inside each part.
pub fn split(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    ratios.validate()?;
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_train = ((ratios.train * n as f64).round() as usize).min(n);
    let n_val = ((ratios.val * n as f64).round() as usize).min(n - n_train);
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok((
        dataset.subset(&train),
        dataset.subset(&val),
        dataset.subset(&test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};
    use std::collections::HashSet;

    fn ds(n: usize) -> Dataset {
        generate(&SynthConfig {
            n_bags: n,
            patches: 4,
            feature_dim: 3,
            signal_fraction: 0.25,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn default_sizes() {
        let (a, b, c) = split(&ds(100), SplitRatios::default(), 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (72, 8, 20));
    }

    #[test]
    fn all_train() {
        let r = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        let (a, b, c) = split(&ds(30), r, 1).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (30, 0, 0));
    }

    #[test]
    fn partition_property() {
        let d = ds(57);
        let (a, b, c) = split(&d, SplitRatios::default(), 3).unwrap();
        let ids = |x: &Dataset| x.bags.iter().map(|b| b.id.clone()).collect::<HashSet<_>>();
        let (ia, ib, ic) = (ids(&a), ids(&b), ids(&c));
        assert!(ia.is_disjoint(&ib) && ia.is_disjoint(&ic) && ib.is_disjoint(&ic));
        let union: HashSet<_> = ia.union(&ib).chain(ic.iter()).cloned().collect();
        assert_eq!(union, ids(&d));
        assert_eq!(a.len() + b.len() + c.len(), d.len());
    }

    #[test]
    fn seeded() {
        let d = ds(50);
        let x = split(&d, SplitRatios::default(), 9).unwrap();
        let y = split(&d, SplitRatios::default(), 9).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bad_sum_is_a_config_error() {
        let r = SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(matches!(split(&ds(10), r, 1), Err(Error::Config { .. })));
    }
}
