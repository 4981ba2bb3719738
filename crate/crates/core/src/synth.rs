//! Synthetic datasets and the decaying-weight fixture ensemble.

use rand::Rng;

use crate::data::Dataset;
use crate::ensemble::{ConvexEnsemble, Mode, Term};
use crate::error::{invalid, Result};
use crate::rng;
use crate::stump::Stump;

/// Synthetic dataset family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// ±1 classes from unit-variance Gaussians centered at ±μ per
    /// coordinate, with label-flip noise.
    TwoGaussians { mu: f64 },
    /// Labels are the XOR of the first two coordinates' signs over a
    /// uniform cube, with label-flip noise.
    NoisyXor,
}

/// Generates a seeded synthetic dataset. `noise` is the label-flip rate and
/// must lie in [0, 1/2).
pub fn synth_data(kind: SynthKind, n: usize, p: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("synthetic data needs n >= 2"));
    }
    if p == 0 {
        return Err(invalid("synthetic data needs p >= 1"));
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(invalid(format!("noise must lie in [0, 1/2), got {noise}")));
    }
    if let SynthKind::NoisyXor = kind {
        if p < 2 {
            return Err(invalid("noisy_xor needs at least 2 features"));
        }
    }
    let mut rng = rng::master(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        match kind {
            SynthKind::TwoGaussians { mu } => {
                let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let row: Vec<f64> = (0..p).map(|_| y * mu + standard_normal(&mut rng)).collect();
                rows.push(row);
                labels.push(flip(y, noise, &mut rng));
            }
            SynthKind::NoisyXor => {
                let row: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = if (row[0] > 0.0) == (row[1] > 0.0) { 1.0 } else { -1.0 };
                labels.push(flip(y, noise, &mut rng));
                rows.push(row);
            }
        }
    }
    Dataset::from_rows(rows, labels)
}

fn flip(y: f64, noise: f64, rng: &mut impl Rng) -> f64 {
    if noise > 0.0 && rng.gen_bool(noise) {
        -y
    } else {
        y
    }
}

/// Box–Muller standard normal from the seeded generator.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Weight-decay profile of the fixture ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightProfile {
    /// `λ_j ∝ j^{-β}` with β > 1.
    Polynomial { beta: f64 },
    /// `λ_j ∝ e^{-j}`.
    Exponential,
}

/// A deterministic 1-D dataset together with a prebuilt ensemble whose
/// weights follow the requested decay over `terms` distinct-profile stumps.
/// Used by the scaling studies of the effective-dimension rates.
pub fn weight_profile_fixture(
    terms: usize,
    profile: WeightProfile,
    n: usize,
) -> Result<(Dataset, ConvexEnsemble)> {
    if terms == 0 {
        return Err(invalid("fixture needs at least one term"));
    }
    if n < terms + 2 {
        return Err(invalid(format!(
            "fixture needs n >= terms + 2 for distinct stump profiles (terms = {terms}, n = {n})"
        )));
    }
    if let WeightProfile::Polynomial { beta } = profile {
        if !(beta > 1.0) {
            return Err(invalid(format!("polynomial profile requires beta > 1, got {beta}")));
        }
    }
    // Evenly spaced points on (0, 1); stumps split at distinct data gaps so
    // every stump has its own sample profile.
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let labels: Vec<f64> = xs.iter().map(|&x| if x > 0.5 { 1.0 } else { -1.0 }).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let data = Dataset::from_rows(rows, labels)?;

    let mut ensemble_terms = Vec::with_capacity(terms);
    for j in 1..=terms {
        let gap = ((j as f64) * (n as f64 - 1.0) / (terms as f64 + 1.0)).floor() as usize;
        let threshold = (xs[gap] + xs[gap + 1]) / 2.0;
        let weight = match profile {
            WeightProfile::Polynomial { beta } => (j as f64).powf(-beta),
            WeightProfile::Exponential => (-(j as f64)).exp(),
        };
        ensemble_terms.push(Term {
            weight,
            stump: Stump::new(0, threshold, 1)?,
        });
    }
    let f = ConvexEnsemble::new(Mode::Conv, ensemble_terms)?.normalize()?;
    Ok((data, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_gaussians_separable_when_far() {
        let data = synth_data(SynthKind::TwoGaussians { mu: 6.0 }, 100, 2, 0.0, 7).unwrap();
        // A stump at 0 on feature 0 classifies perfectly.
        let stump = Stump::new(0, 0.0, 1).unwrap();
        let errors = (0..data.n())
            .filter(|&i| stump.evaluate(data.row(i)) != data.label(i))
            .count();
        assert_eq!(errors, 0);
    }

    #[test]
    fn synth_is_seeded_and_validates() {
        let a = synth_data(SynthKind::NoisyXor, 50, 3, 0.1, 9).unwrap();
        let b = synth_data(SynthKind::NoisyXor, 50, 3, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert!(synth_data(SynthKind::NoisyXor, 50, 1, 0.1, 9).is_err());
        assert!(synth_data(SynthKind::TwoGaussians { mu: 1.0 }, 50, 2, 0.5, 9).is_err());
        assert!(synth_data(SynthKind::TwoGaussians { mu: 1.0 }, 1, 2, 0.1, 9).is_err());
    }

    #[test]
    fn xor_labels_match_signs_when_noise_free() {
        let data = synth_data(SynthKind::NoisyXor, 64, 2, 0.0, 3).unwrap();
        for i in 0..data.n() {
            let row = data.row(i);
            let expected = if (row[0] > 0.0) == (row[1] > 0.0) { 1.0 } else { -1.0 };
            assert_eq!(data.label(i), expected);
        }
    }

    #[test]
    fn fixture_weights_and_profiles_are_distinct() {
        let (data, f) = weight_profile_fixture(16, WeightProfile::Polynomial { beta: 2.0 }, 200)
            .unwrap();
        assert_eq!(f.len(), 16);
        assert!(f.is_normalized());
        // Weight ratio λ_1/λ_2 = 2^β = 4.
        let w: Vec<f64> = f.weights().collect();
        assert!((w[0] / w[1] - 4.0).abs() < 1e-9);
        // Distinct profiles: every stump splits at a different gap.
        let distinct = crate::covering::n_infty(&f, &data).unwrap();
        assert_eq!(distinct, 16);

        let (_, g) = weight_profile_fixture(8, WeightProfile::Exponential, 100).unwrap();
        let gw: Vec<f64> = g.weights().collect();
        assert!((gw[0] / gw[1] - std::f64::consts::E).abs() < 1e-9);

        assert!(weight_profile_fixture(8, WeightProfile::Polynomial { beta: 1.0 }, 100).is_err());
        assert!(weight_profile_fixture(200, WeightProfile::Exponential, 100).is_err());
    }
}
