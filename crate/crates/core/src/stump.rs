//! Axis-aligned decision stumps, the base hypothesis class.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};

/// A decision stump: returns `polarity` when the feature value strictly
/// exceeds the threshold and `-polarity` otherwise (ties take the else
/// branch). The class is sign-symmetric: flipping `polarity` negates the
/// stump everywhere.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    pub fn new(feature: usize, threshold: f64, polarity: i8) -> Result<Self> {
        if polarity != 1 && polarity != -1 {
            return Err(invalid(format!("polarity must be -1 or +1, got {polarity}")));
        }
        if threshold.is_nan() {
            return Err(invalid("threshold must not be NaN"));
        }
        Ok(Stump { feature, threshold, polarity })
    }

    /// Evaluates the stump on a feature row. Panics if the row is narrower
    /// than `feature`; ensemble-level entry points validate widths first.
    #[inline]
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        if row[self.feature] > self.threshold {
            f64::from(self.polarity)
        } else {
            -f64::from(self.polarity)
        }
    }

    /// Sample profile `(h(X_1), ..., h(X_n))`.
    pub fn profile(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n()).map(|i| self.evaluate(data.row(i))).collect()
    }

    /// Mirror image `-h`: same split, flipped polarity.
    pub fn negated(&self) -> Stump {
        Stump { feature: self.feature, threshold: self.threshold, polarity: -self.polarity }
    }

    fn cmp_key(&self, other: &Stump) -> Ordering {
        self.feature
            .cmp(&other.feature)
            .then_with(|| self.threshold.total_cmp(&other.threshold))
            .then_with(|| self.polarity.cmp(&other.polarity))
    }
}

// Identity for merging and deterministic tie-breaks: lexicographic on
// (feature, threshold, polarity). NaN thresholds are rejected at
// construction, so the total order is well defined.
impl PartialEq for Stump {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}

impl Eq for Stump {}

impl PartialOrd for Stump {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Stump {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_comparison_at_threshold() {
        let s = Stump::new(0, 1.0, 1).unwrap();
        assert_eq!(s.evaluate(&[1.0]), -1.0); // tie goes to the else branch
        assert_eq!(s.evaluate(&[1.0 + 1e-12]), 1.0);
        assert_eq!(s.negated().evaluate(&[2.0]), -1.0);
    }

    #[test]
    fn ordering_is_lexicographic() {
        let a = Stump::new(0, 0.5, -1).unwrap();
        let b = Stump::new(0, 0.5, 1).unwrap();
        let c = Stump::new(0, 0.75, -1).unwrap();
        let d = Stump::new(1, 0.0, -1).unwrap();
        assert!(a < b && b < c && c < d);
        assert_eq!(a, Stump::new(0, 0.5, -1).unwrap());
    }

    #[test]
    fn rejects_bad_polarity_and_nan() {
        assert!(Stump::new(0, 0.0, 0).is_err());
        assert!(Stump::new(0, f64::NAN, 1).is_err());
    }
}
