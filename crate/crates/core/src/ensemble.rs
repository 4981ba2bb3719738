//! Convex (and symmetric-convex) combinations of stumps.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, structure, Error, Result};
use crate::exec;
use crate::stump::Stump;

/// Weight regime of a combination: `Conv` keeps nonnegative weights summing
/// to one after [`ConvexEnsemble::normalize`]; `Sconv` allows signed weights
/// with total absolute mass one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Conv,
    Sconv,
}

/// One weighted voter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub weight: f64,
    #[serde(flatten)]
    pub stump: Stump,
}

/// A voting classifier `f = Σ λ_k h_k`. Immutable after construction.
///
/// `normalize` establishes the canonical form used by every complexity
/// measure: duplicate stumps merged, total |weight| exactly rescaled to 1,
/// terms sorted by decreasing |weight|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexEnsemble {
    mode: Mode,
    terms: Vec<Term>,
    #[serde(skip)]
    normalized: bool,
}

impl ConvexEnsemble {
    pub fn new(mode: Mode, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(invalid("ensemble must contain at least one term"));
        }
        for t in &terms {
            if !t.weight.is_finite() {
                return Err(invalid("ensemble weights must be finite"));
            }
            if mode == Mode::Conv && t.weight < 0.0 {
                return Err(invalid(format!(
                    "conv mode requires nonnegative weights, found {}",
                    t.weight
                )));
            }
            // Re-run stump validation so hand-built terms obey the same rules.
            Stump::new(t.stump.feature, t.stump.threshold, t.stump.polarity)?;
        }
        Ok(ConvexEnsemble { mode, terms, normalized: false })
    }

    /// Convenience constructor from `(weight, stump)` pairs.
    pub fn from_pairs(mode: Mode, pairs: Vec<(f64, Stump)>) -> Result<Self> {
        ConvexEnsemble::new(
            mode,
            pairs.into_iter().map(|(weight, stump)| Term { weight, stump }).collect(),
        )
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(|t| t.weight)
    }

    /// Smallest row width every term can evaluate against.
    pub fn min_row_width(&self) -> usize {
        self.terms.iter().map(|t| t.stump.feature + 1).max().unwrap_or(0)
    }

    pub fn check_row_width(&self, p: usize) -> Result<()> {
        if self.min_row_width() > p {
            return Err(structure(format!(
                "ensemble references feature index {} but rows have {} features",
                self.min_row_width() - 1,
                p
            )));
        }
        Ok(())
    }

    /// `f(x) = Σ λ_k h_k(x)`; |result| ≤ Σ|λ_k|.
    pub fn evaluate(&self, row: &[f64]) -> Result<f64> {
        self.check_row_width(row.len())?;
        Ok(self.eval_raw(row))
    }

    /// Margin `y · f(x)` of a labeled example.
    pub fn margin(&self, row: &[f64], label: f64) -> Result<f64> {
        if label != 1.0 && label != -1.0 {
            return Err(invalid(format!("label must be -1 or +1, got {label}")));
        }
        Ok(label * self.evaluate(row)?)
    }

    /// Evaluation without the width check; rows must already be validated.
    #[inline]
    pub(crate) fn eval_raw(&self, row: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * t.stump.evaluate(row)).sum()
    }

    /// Per-row margins `y_i f(X_i)` over a dataset.
    pub fn margins_on(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_row_width(data.p())?;
        Ok(exec::map_collect(data.n(), |i| {
            data.label(i) * self.eval_raw(data.row(i))
        }))
    }

    /// Canonical form: duplicate stumps merged (weights summed), zero-mass
    /// terms dropped, weights rescaled so Σ|λ| = 1, terms sorted by
    /// decreasing |λ| (stump order breaks ties). The induced classifier sign
    /// is unchanged at every point because f is scaled by a positive scalar.
    pub fn normalize(&self) -> Result<ConvexEnsemble> {
        let mut merged: BTreeMap<Stump, f64> = BTreeMap::new();
        for t in &self.terms {
            *merged.entry(t.stump).or_insert(0.0) += t.weight;
        }
        let mut terms: Vec<Term> = merged
            .into_iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|(stump, weight)| Term { weight, stump })
            .collect();
        let total: f64 = terms.iter().map(|t| t.weight.abs()).sum();
        if total <= 0.0 || terms.is_empty() {
            return Err(Error::DegenerateEnsemble(
                "all weights are zero after merging".into(),
            ));
        }
        // Unit mass within rounding is left untouched: rescaling by 1 ± ulp
        // would break idempotence.
        if (total - 1.0).abs() > 1e-12 {
            for t in &mut terms {
                t.weight /= total;
            }
        }
        terms.sort_by(|a, b| {
            b.weight
                .abs()
                .total_cmp(&a.weight.abs())
                .then_with(|| a.stump.cmp(&b.stump))
        });
        Ok(ConvexEnsemble { mode: self.mode, terms, normalized: true })
    }

    /// Whether this value was produced by [`normalize`] (or verified by
    /// [`ConvexEnsemble::verify_normalized`]).
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn require_normalized(&self, op: &str) -> Result<()> {
        if !self.normalized {
            return Err(invalid(format!("{op} requires a normalized ensemble")));
        }
        Ok(())
    }

    /// Checks the canonical-form invariants on an externally built ensemble
    /// (e.g. one loaded from disk) and marks it normalized.
    pub fn verify_normalized(mut self) -> Result<ConvexEnsemble> {
        let total: f64 = self.terms.iter().map(|t| t.weight.abs()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "weights sum to {total}, expected 1 (store models post-normalize)"
            )));
        }
        for w in self.terms.windows(2) {
            if w[0].weight.abs() < w[1].weight.abs() {
                return Err(invalid("weights must be sorted by decreasing |weight|"));
            }
            if w[0].stump == w[1].stump {
                return Err(invalid("duplicate stumps must be merged"));
            }
        }
        let mut sorted: Vec<Stump> = self.terms.iter().map(|t| t.stump).collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate stumps must be merged"));
        }
        if self.terms.iter().any(|t| t.weight == 0.0) {
            return Err(invalid("zero-weight terms must be dropped"));
        }
        self.normalized = true;
        Ok(self)
    }

    /// Tail weight `γ_d(f) = Σ_{k>d} |λ_k|` of a normalized ensemble.
    /// `γ_0 = 1`, `γ_T = 0`, nonincreasing in `d`. (`d` is unsigned by
    /// construction, so the negative-argument error path cannot occur.)
    pub fn tail_weight(&self, d: usize) -> Result<f64> {
        self.require_normalized("tail_weight")?;
        let start = d.min(self.terms.len());
        Ok(self.terms[start..].iter().map(|t| t.weight.abs()).sum())
    }

    /// Signed weights folded into polarity: every term becomes nonnegative
    /// with the sign absorbed by the stump's mirror image. Only meaningful
    /// explicit conversion from sconv to conv form.
    pub fn fold_signs(&self) -> Result<ConvexEnsemble> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                if t.weight < 0.0 {
                    Term { weight: -t.weight, stump: t.stump.negated() }
                } else {
                    *t
                }
            })
            .collect();
        ConvexEnsemble::new(Mode::Conv, terms)?.normalize()
    }

    /// Serializes the persistence document. Requires canonical form: weights
    /// are stored post-normalize.
    pub fn save_json(&self, mut writer: impl Write) -> Result<()> {
        self.require_normalized("save_json")?;
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn save_json_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_json(std::fs::File::create(path)?)
    }

    /// Loads a persistence document and re-checks the canonical-form
    /// invariants (models are stored post-normalize).
    pub fn load_json(reader: impl Read) -> Result<ConvexEnsemble> {
        let raw: ConvexEnsemble = serde_json::from_reader(reader)?;
        ConvexEnsemble::new(raw.mode, raw.terms)?.verify_normalized()
    }

    pub fn load_json_path(path: impl AsRef<Path>) -> Result<ConvexEnsemble> {
        Self::load_json(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(feature: usize, threshold: f64, polarity: i8) -> Stump {
        Stump::new(feature, threshold, polarity).unwrap()
    }

    #[test]
    fn evaluate_weighted_sum() {
        // h1 fires +1 for x > 0, h2 fires +1 for x > 2.
        let f = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.6, h(0, 0.0, 1)), (0.4, h(0, 2.0, 1))],
        )
        .unwrap();
        assert_eq!(f.evaluate(&[3.0]).unwrap(), 1.0);
        assert!((f.evaluate(&[1.0]).unwrap() - 0.2).abs() < 1e-15);

        let single = ConvexEnsemble::from_pairs(Mode::Conv, vec![(1.0, h(0, 0.0, 1))]).unwrap();
        assert_eq!(single.evaluate(&[1.0]).unwrap(), 1.0);

        let cancel = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.5, h(0, 0.0, 1)), (0.5, h(0, 0.0, -1))],
        )
        .unwrap();
        assert_eq!(cancel.evaluate(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_rejects_short_rows() {
        let f = ConvexEnsemble::from_pairs(Mode::Conv, vec![(1.0, h(3, 0.0, 1))]).unwrap();
        assert!(matches!(f.evaluate(&[1.0]), Err(Error::Structure(_))));
    }

    #[test]
    fn margin_signs() {
        let f = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.6, h(0, 0.0, 1)), (0.4, h(0, 2.0, 1))],
        )
        .unwrap();
        let fx = f.evaluate(&[1.0]).unwrap();
        assert!((f.margin(&[1.0], 1.0).unwrap() - fx).abs() < 1e-15);
        assert!((f.margin(&[1.0], -1.0).unwrap() + fx).abs() < 1e-15);
        assert!(f.margin(&[1.0], 0.0).is_err());
    }

    #[test]
    fn normalize_merges_rescales_sorts() {
        let f = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.2, h(0, 1.0, 1)), (0.2, h(0, 1.0, 1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.terms()[0].weight, 1.0);

        let g = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.3, h(0, 1.0, 1)), (0.6, h(0, 2.0, 1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        assert!((g.terms()[0].weight - 2.0 / 3.0).abs() < 1e-15);
        assert!((g.terms()[1].weight - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.terms()[0].stump, h(0, 2.0, 1));

        // Idempotence: normalizing a normalized ensemble is the identity.
        let gg = g.normalize().unwrap();
        assert_eq!(g, gg);
    }

    #[test]
    fn normalize_preserves_sign_everywhere() {
        let raw = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.9, h(0, 1.0, 1)), (0.3, h(0, 3.0, -1)), (0.15, h(0, 1.0, 1))],
        )
        .unwrap();
        let norm = raw.normalize().unwrap();
        let sign = |v: f64| {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        for x in [-1.0, 0.5, 1.5, 2.5, 3.5, 10.0] {
            let a = raw.evaluate(&[x]).unwrap();
            let b = norm.evaluate(&[x]).unwrap();
            assert_eq!(sign(a), sign(b));
        }
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let z = ConvexEnsemble::from_pairs(Mode::Conv, vec![(0.0, h(0, 1.0, 1))]).unwrap();
        assert!(matches!(z.normalize(), Err(Error::DegenerateEnsemble(_))));
        // sconv cancellation across duplicate stumps
        let c = ConvexEnsemble::from_pairs(
            Mode::Sconv,
            vec![(0.5, h(0, 1.0, 1)), (-0.5, h(0, 1.0, 1))],
        )
        .unwrap();
        assert!(matches!(c.normalize(), Err(Error::DegenerateEnsemble(_))));
    }

    #[test]
    fn tail_weights() {
        let f = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.5, h(0, 1.0, 1)), (0.3, h(0, 2.0, 1)), (0.2, h(0, 3.0, 1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        assert!((f.tail_weight(1).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.tail_weight(0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(f.tail_weight(3).unwrap(), 0.0);
        assert_eq!(f.tail_weight(7).unwrap(), 0.0);
        // nonincreasing
        let mut prev = f.tail_weight(0).unwrap();
        for d in 1..=3 {
            let t = f.tail_weight(d).unwrap();
            assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn persistence_roundtrip_and_format() {
        let f = ConvexEnsemble::from_pairs(
            Mode::Conv,
            vec![(0.75, h(1, 0.25, 1)), (0.25, h(0, -1.5, -1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        let mut buf = Vec::new();
        f.save_json(&mut buf).unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(doc["mode"], "conv");
        assert_eq!(doc["terms"][0]["feature"], 1);
        assert_eq!(doc["terms"][0]["polarity"], 1);
        assert_eq!(doc["terms"][0]["weight"], 0.75);
        let back = ConvexEnsemble::load_json(&buf[..]).unwrap();
        assert_eq!(f, back);
        assert!(back.is_normalized());
    }

    #[test]
    fn load_rejects_unnormalized_documents() {
        let doc = r#"{"mode":"conv","terms":[
            {"weight":0.5,"feature":0,"threshold":1.0,"polarity":1},
            {"weight":0.2,"feature":0,"threshold":2.0,"polarity":1}]}"#;
        assert!(ConvexEnsemble::load_json(doc.as_bytes()).is_err());
        let dup = r#"{"mode":"conv","terms":[
            {"weight":0.5,"feature":0,"threshold":1.0,"polarity":1},
            {"weight":0.5,"feature":0,"threshold":1.0,"polarity":1}]}"#;
        assert!(ConvexEnsemble::load_json(dup.as_bytes()).is_err());
    }

    #[test]
    fn fold_signs_keeps_classifier() {
        let f = ConvexEnsemble::from_pairs(
            Mode::Sconv,
            vec![(0.75, h(0, 1.0, 1)), (-0.25, h(0, 3.0, 1))],
        )
        .unwrap()
        .normalize()
        .unwrap();
        let g = f.fold_signs().unwrap();
        assert_eq!(g.mode(), Mode::Conv);
        for x in [0.0, 2.0, 4.0] {
            assert!((f.evaluate(&[x]).unwrap() - g.evaluate(&[x]).unwrap()).abs() < 1e-15);
        }
        assert!(g.weights().all(|w| w >= 0.0));
    }
}
