//! Shared fixtures for the integration suites.
// Not every suite uses every helper.
#![allow(dead_code)]

use rand::Rng;

use votebound_core::ensemble::{ConvexEnsemble, Mode};
use votebound_core::rng;
use votebound_core::stump::Stump;
use votebound_core::Dataset;

pub fn stump(feature: usize, threshold: f64, polarity: i8) -> Stump {
    Stump::new(feature, threshold, polarity).unwrap()
}

/// Normalized conv ensemble with the given weights over distinct stumps.
pub fn ensemble_with_weights(weights: &[f64]) -> ConvexEnsemble {
    let pairs = weights
        .iter()
        .enumerate()
        .map(|(j, &w)| (w, stump(0, j as f64 + 0.5, 1)))
        .collect();
    ConvexEnsemble::from_pairs(Mode::Conv, pairs)
        .unwrap()
        .normalize()
        .unwrap()
}

/// 1-D integer grid data with alternating labels.
pub fn grid_data(n: usize) -> Dataset {
    Dataset::from_rows(
        (0..n).map(|i| vec![i as f64]).collect(),
        (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
    )
    .unwrap()
}

/// Random normalized weight vector of length T (entries bounded away from 0).
pub fn random_weights(rng: &mut impl Rng, t: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..t).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Random small dataset for stump-search oracles.
pub fn random_dataset(rng: &mut impl Rng, n: usize, p: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| f64::from(rng.gen_range(-5..6))).collect())
        .collect();
    let labels: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Dataset::from_rows(rows, labels).unwrap()
}

/// Random ensemble of distinct-threshold stumps on 1-D data.
pub fn random_ensemble(rng: &mut impl Rng, max_terms: usize) -> ConvexEnsemble {
    let t = rng.gen_range(1..=max_terms);
    let weights = random_weights(rng, t);
    let pairs = weights
        .into_iter()
        .enumerate()
        .map(|(j, w)| {
            (
                w,
                stump(
                    0,
                    j as f64 + rng.gen_range(-0.3..0.3),
                    if rng.gen_bool(0.5) { 1 } else { -1 },
                ),
            )
        })
        .collect();
    ConvexEnsemble::from_pairs(Mode::Conv, pairs)
        .unwrap()
        .normalize()
        .unwrap()
}

/// Two groups of same-dichotomy stumps with complementary polarities:
/// f ≡ 0 on the grid, pointwise variance ≡ 1, and the polarity split is a
/// zero-variance 2-cluster decomposition.
pub fn duplicate_group_fixture(n: usize) -> (ConvexEnsemble, Dataset) {
    let mid = n as f64 / 2.0;
    let f = ConvexEnsemble::from_pairs(
        Mode::Conv,
        vec![
            (1.0, stump(0, mid - 0.75, 1)),
            (1.0, stump(0, mid - 0.5, 1)),
            (1.0, stump(0, mid - 0.25, 1)),
            (1.0, stump(0, mid - 0.75, -1)),
            (1.0, stump(0, mid - 0.5, -1)),
            (1.0, stump(0, mid - 0.25, -1)),
        ],
    )
    .unwrap()
    .normalize()
    .unwrap();
    (f, grid_data(n))
}

/// Deterministic rng for a test case.
pub fn test_rng(seed: u64) -> impl Rng {
    rng::stream(seed, 0)
}
