//! Monte-Carlo estimate of the Type-I/Type-II errors of the optimal
//! discriminator on the Gaussian benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confusion, type_errors, ConfusionCounts, RejectionScoredItem};
use crate::error::{Error, Result};
use crate::gaussian::{sample_pool, split, GaussianBinaryModel, SplitDataset};
use crate::scalar::{lit, Scalar};
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig<T> {
    pub mu: Vec<T>,
    pub sigma: T,
    pub n_per_class: usize,
    pub n_train: usize,
    pub splits: usize,
    pub train: TrainConfig<T>,
    pub base_seed: u64,
    pub resample_pool_per_split: bool,
}

impl<T: Scalar> Default for TradeoffConfig<T> {
    fn default() -> Self {
        Self {
            mu: vec![T::one(), T::one()],
            sigma: lit(2.0),
            n_per_class: 5000,
            n_train: 6700,
            splits: 8,
            train: TrainConfig::default(),
            base_seed: 0,
            resample_pool_per_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffSplit<T> {
    pub split: usize,
    pub seed: u64,
    pub counts: ConfusionCounts,
    pub eps0: T,
    pub eps1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffEstimate<T> {
    pub gamma: T,
    pub eps0_avg: T,
    pub eps1_avg: T,
    pub per_split: Vec<TradeoffSplit<T>>,
}

/// Draws the pool(s) and partitions for a benchmark run. Split `i` uses seed
/// `base_seed + i`; the pool uses `base_seed` (or `base_seed + i` when
/// resampled per split).
pub fn benchmark_splits<T: Scalar>(
    model: &GaussianBinaryModel<T>,
    n_per_class: usize,
    n_train: usize,
    splits: usize,
    base_seed: u64,
    resample_pool_per_split: bool,
) -> Result<Vec<SplitDataset<T>>> {
    if splits == 0 {
        return Err(Error::param("splits", "must be >= 1"));
    }
    let shared = if resample_pool_per_split {
        None
    } else {
        Some(sample_pool(model, n_per_class, base_seed)?)
    };
    (0..splits as u64)
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            match &shared {
                Some(pool) => split(pool, n_train, seed),
                None => split(&sample_pool(model, n_per_class, seed)?, n_train, seed),
            }
        })
        .collect()
}

/// Trains one classifier per split, rejects test points whose optimal
/// score exceeds `gamma`, and averages ε₀ and ε₁ over splits.
pub fn tradeoff_monte_carlo<T: Scalar>(cfg: &TradeoffConfig<T>, gamma: T) -> Result<TradeoffEstimate<T>> {
    if gamma.is_nan() || gamma < T::zero() {
        return Err(Error::param("gamma", format!("must be >= 0, got {gamma}")));
    }
    cfg.train.validate()?;
    let model = GaussianBinaryModel::new(cfg.mu.clone(), cfg.sigma)?;
    let datasets = benchmark_splits(
        &model,
        cfg.n_per_class,
        cfg.n_train,
        cfg.splits,
        cfg.base_seed,
        cfg.resample_pool_per_split,
    )?;

    let per_split = datasets
        .par_iter()
        .enumerate()
        .map(|(i, ds)| {
            let clf = train(&ds.train, &cfg.train)?;
            let items = ds
                .test
                .iter()
                .enumerate()
                .map(|(id, s)| {
                    let pred = clf.predict(&s.x)?;
                    Ok(RejectionScoredItem {
                        id,
                        rejection_score: model.optimal_score(pred, &s.x)?.value(),
                        error: pred != s.y,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let counts = confusion(&items, gamma);
            let e = type_errors::<T>(&counts)?;
            Ok(TradeoffSplit { split: i, seed: ds.seed, counts, eps0: e.eps0, eps1: e.eps1 })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = lit::<T>(per_split.len() as f64);
    let eps0_avg = per_split.iter().map(|s| s.eps0).sum::<T>() / n;
    let eps1_avg = per_split.iter().map(|s| s.eps1).sum::<T>() / n;
    Ok(TradeoffEstimate { gamma, eps0_avg, eps1_avg, per_split })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TradeoffConfig<f64> {
        TradeoffConfig { n_per_class: 500, n_train: 600, splits: 3, ..Default::default() }
    }

    #[test]
    fn limits_in_gamma() {
        let none = tradeoff_monte_carlo(&small(), 1e300).unwrap();
        assert_eq!((none.eps0_avg, none.eps1_avg), (0.0, 1.0));
        let all = tradeoff_monte_carlo(&small(), 0.0).unwrap();
        assert_eq!((all.eps0_avg, all.eps1_avg), (1.0, 0.0));
    }

    #[test]
    fn deterministic_and_ordered() {
        let a = tradeoff_monte_carlo(&small(), 1.0).unwrap();
        let b = tradeoff_monte_carlo(&small(), 1.0).unwrap();
        assert_eq!(a, b);
        let seeds: Vec<_> = a.per_split.iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![0, 1, 2]);
    }

    #[test]
    fn averages_are_means_of_splits() {
        let a = tradeoff_monte_carlo(&small(), 1.0).unwrap();
        let m = a.per_split.iter().map(|s| s.eps0).sum::<f64>() / 3.0;
        assert_eq!(a.eps0_avg, m);
    }

    #[test]
    fn shared_pool_vs_resampled() {
        let model = GaussianBinaryModel::new(vec![1.0, 1.0], 2.0).unwrap();
        let fixed = benchmark_splits(&model, 50, 60, 2, 3, false).unwrap();
        let mut a = fixed[0].train.clone();
        a.extend(fixed[0].test.clone());
        let mut b = fixed[1].train.clone();
        b.extend(fixed[1].test.clone());
        let key = |s: &crate::gaussian::LabeledSample<f64>| (s.x[0].to_bits(), s.x[1].to_bits());
        let mut ka: Vec<_> = a.iter().map(key).collect();
        let mut kb: Vec<_> = b.iter().map(key).collect();
        ka.sort();
        kb.sort();
        assert_eq!(ka, kb);

        let fresh = benchmark_splits(&model, 50, 60, 2, 3, true).unwrap();
        assert_ne!(fresh[0].train[0].x, fresh[1].train[0].x);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(tradeoff_monte_carlo(&small(), -1.0).is_err());
        assert!(tradeoff_monte_carlo(&small(), f64::NAN).is_err());
    }
}
