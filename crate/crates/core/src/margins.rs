//! Empirical margin distributions and piecewise-linear margin losses.

use crate::data::Dataset;
use crate::ensemble::ConvexEnsemble;
use crate::error::{invalid, Result};
use crate::exec;

/// Sorted empirical margins `y_i f(X_i)`; the margin distribution
/// `P_n(yf ≤ δ)` and the minimal margin `δ_*` are read off this.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginProfile {
    sorted: Vec<f64>,
}

impl MarginProfile {
    /// Builds a profile from raw margin values (any order).
    pub fn new(mut margins: Vec<f64>) -> Result<Self> {
        if margins.is_empty() {
            return Err(invalid("margin profile needs at least one value"));
        }
        for m in &margins {
            if !m.is_finite() || m.abs() > 1.0 + 1e-9 {
                return Err(invalid(format!("margin {m} is outside [-1, 1]")));
            }
        }
        margins.sort_by(f64::total_cmp);
        Ok(MarginProfile { sorted: margins })
    }

    /// Profile of an ensemble over a dataset.
    pub fn from_ensemble(f: &ConvexEnsemble, data: &Dataset) -> Result<Self> {
        MarginProfile::new(f.margins_on(data)?)
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `P_n(yf ≤ δ)` with the closed inequality.
    pub fn cdf(&self, delta: f64) -> f64 {
        let count = self.sorted.partition_point(|&m| m <= delta);
        count as f64 / self.sorted.len() as f64
    }

    /// Minimal margin `δ_* = min_i y_i f(X_i)`. When positive this is the
    /// sup of margins δ with `P_n(yf ≤ δ) = 0`, in the sense that the cdf
    /// vanishes strictly below it.
    pub fn min_margin(&self) -> f64 {
        self.sorted[0]
    }

    /// Zero-error threshold: the largest grid δ with
    /// `δ^{2α/(2+α)} P_n(yf ≤ δ) ≤ n^{−2/(2+α)}`, scanned over the supplied
    /// grid (the definition fixes no grid).
    pub fn zero_error_threshold(&self, alpha: f64, grid: &[f64]) -> Option<f64> {
        let n = self.sorted.len() as f64;
        let rhs = n.powf(-2.0 / (2.0 + alpha));
        grid.iter()
            .copied()
            .filter(|&d| d > 0.0 && d.powf(2.0 * alpha / (2.0 + alpha)) * self.cdf(d) <= rhs)
            .fold(None, |best: Option<f64>, d| {
                Some(best.map_or(d, |b| b.max(d)))
            })
    }
}

/// Orientation of a ramp loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampOrientation {
    /// 1 below `lo`, 0 above `hi` (margin-style loss).
    Decreasing,
    /// 0 below `lo`, 1 above `hi`.
    Increasing,
}

/// Piecewise-linear [0, 1] loss with Lipschitz constant `1/(hi − lo)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampLoss {
    pub lo: f64,
    pub hi: f64,
    pub orientation: RampOrientation,
}

impl RampLoss {
    pub fn new(lo: f64, hi: f64, orientation: RampOrientation) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(invalid(format!("ramp needs finite hi > lo, got [{lo}, {hi}]")));
        }
        Ok(RampLoss { lo, hi, orientation })
    }

    pub fn decreasing(lo: f64, hi: f64) -> Result<Self> {
        RampLoss::new(lo, hi, RampOrientation::Decreasing)
    }

    pub fn increasing(lo: f64, hi: f64) -> Result<Self> {
        RampLoss::new(lo, hi, RampOrientation::Increasing)
    }

    /// The margin loss φ_δ: 1 for s ≤ 0, 0 for s ≥ δ, linear between.
    pub fn margin_loss(delta: f64) -> Result<Self> {
        RampLoss::decreasing(0.0, delta)
    }

    pub fn lipschitz(&self) -> f64 {
        1.0 / (self.hi - self.lo)
    }

    pub fn value(&self, s: f64) -> f64 {
        let rising = ((s - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        match self.orientation {
            RampOrientation::Increasing => rising,
            RampOrientation::Decreasing => 1.0 - rising,
        }
    }
}

/// `n^{-1} Σ φ(y_i f(X_i))`. For the decreasing ramp on [0, δ] this sits in
/// the sandwich `P_n(yf ≤ 0) ≤ value ≤ P_n(yf ≤ δ)`.
pub fn ramp_mean(f: &ConvexEnsemble, data: &Dataset, ramp: &RampLoss) -> Result<f64> {
    f.check_row_width(data.p())?;
    let values = exec::map_collect(data.n(), |i| {
        ramp.value(data.label(i) * f.eval_raw(data.row(i)))
    });
    Ok(values.iter().sum::<f64>() / data.n() as f64)
}

/// Mean ramp loss over an existing margin profile.
pub fn ramp_mean_profile(profile: &MarginProfile, ramp: &RampLoss) -> f64 {
    profile.sorted().iter().map(|&m| ramp.value(m)).sum::<f64>() / profile.n() as f64
}

/// Holdout frequency of `yf(x) ≤ 0` — margins exactly 0 (no decision) count
/// as errors. Keeping the holdout disjoint from training is the caller's
/// job; the experiment harness enforces it.
pub fn test_error(f: &ConvexEnsemble, holdout: &Dataset) -> Result<f64> {
    let margins = f.margins_on(holdout)?;
    let errors = margins.iter().filter(|&&m| m <= 0.0).count();
    Ok(errors as f64 / holdout.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Mode;
    use crate::stump::Stump;

    fn h(threshold: f64, polarity: i8) -> Stump {
        Stump::new(0, threshold, polarity).unwrap()
    }

    #[test]
    fn profile_of_constant_classifier() {
        // Two stumps whose thresholds sit below all data: f ≡ +1 there.
        let g = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.5, h(-10.0, 1)), (0.5, h(-20.0, 1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        let data = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let prof = MarginProfile::from_ensemble(&g, &data).unwrap();
        assert_eq!(prof.sorted(), &[1.0, 1.0]);
        let data_neg = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![-1.0, -1.0]).unwrap();
        let prof_neg = MarginProfile::from_ensemble(&g, &data_neg).unwrap();
        assert_eq!(prof_neg.sorted(), &[-1.0, -1.0]);
    }

    #[test]
    fn cdf_closed_inequality() {
        let prof = MarginProfile::new(vec![0.4, 0.4, 0.4]).unwrap();
        assert_eq!(prof.cdf(0.3), 0.0);
        assert_eq!(prof.cdf(0.4), 1.0); // closed: ≤ δ
        assert_eq!(prof.cdf(0.5), 1.0);

        let mixed = MarginProfile::new(vec![0.2, -0.1, 0.4, 0.4]).unwrap();
        assert_eq!(mixed.cdf(0.2), 0.5);
        assert_eq!(mixed.cdf(-1.0 - 1e-9), 0.0);
        assert_eq!(mixed.cdf(1.0), 1.0);
    }

    #[test]
    fn min_margin_is_first_sorted() {
        assert_eq!(MarginProfile::new(vec![0.3, 0.1]).unwrap().min_margin(), 0.1);
        assert_eq!(MarginProfile::new(vec![0.5, -0.2]).unwrap().min_margin(), -0.2);
    }

    #[test]
    fn ramp_values_and_lipschitz() {
        let ramp = RampLoss::margin_loss(0.5).unwrap();
        assert_eq!(ramp.value(-0.1), 1.0);
        assert_eq!(ramp.value(0.6), 0.0);
        assert!((ramp.value(0.25) - 0.5).abs() < 1e-15);
        assert_eq!(ramp.lipschitz(), 2.0);

        let up = RampLoss::increasing(0.2, 0.4).unwrap();
        assert_eq!(up.value(0.1), 0.0);
        assert_eq!(up.value(0.5), 1.0);
        assert!((up.value(0.3) - 0.5).abs() < 1e-15);

        assert!(RampLoss::decreasing(0.5, 0.5).is_err());
    }

    #[test]
    fn ramp_mean_midpoint_case() {
        let prof = MarginProfile::new(vec![0.25]).unwrap();
        let ramp = RampLoss::margin_loss(0.5).unwrap();
        assert!((ramp_mean_profile(&prof, &ramp) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sandwich_against_cdf() {
        let prof = MarginProfile::new(vec![-0.5, -0.1, 0.05, 0.2, 0.7, 1.0]).unwrap();
        for k in 1..6 {
            let delta = 2f64.powi(-k);
            let ramp = RampLoss::margin_loss(delta).unwrap();
            let mid = ramp_mean_profile(&prof, &ramp);
            assert!(prof.cdf(0.0) <= mid + 1e-15);
            assert!(mid <= prof.cdf(delta) + 1e-15);
        }
    }

    #[test]
    fn test_error_counts_zero_margins() {
        let g = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.5, h(0.5, 1)), (0.5, h(0.5, -1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        // g ≡ 0 everywhere: every margin is 0 and counts as an error.
        let data = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        assert_eq!(test_error(&g, &data).unwrap(), 1.0);

        // A perfect classifier has error 0; its sign-flip has error 1.
        let perfect = ConvexEnsemble::from_pairs(Mode::Conv, vec![(1.0, h(0.5, 1))])
            .unwrap()
            .normalize()
            .unwrap();
        let labeled = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![-1.0, 1.0]).unwrap();
        assert_eq!(test_error(&perfect, &labeled).unwrap(), 0.0);
        let flipped = ConvexEnsemble::from_pairs(Mode::Conv, vec![(1.0, h(0.5, -1))])
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!(test_error(&flipped, &labeled).unwrap(), 1.0);
    }
}
