//! Shared bound parameters and the uniform term-by-term bound report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sparsity;

/// The dyadic grid {2^{-1}, ..., 2^{-depth}} used as the default margin
/// grid.
pub fn dyadic_grid(depth: usize) -> Vec<f64> {
    (1..=depth as i32).map(|k| 2f64.powi(-k)).collect()
}

/// User-facing knobs shared by every bound evaluator.
///
/// `v` is the covering exponent of the base class, `t` the confidence
/// exponent, and `k` a stand-in for the inequalities' absolute constants
/// (which are unspecified), so totals are for shape and relative comparison,
/// not certified coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub v: f64,
    pub t: f64,
    pub k: f64,
    pub n: usize,
    pub delta_grid: Vec<f64>,
    pub p_exponent: f64,
    pub m_max: usize,
}

impl BoundParams {
    /// Defaults: t = 3, K = 1, dyadic δ grid of depth 10, p exponent 2,
    /// cluster search cap 8.
    pub fn new(v: f64, n: usize) -> Result<Self> {
        BoundParams {
            v,
            t: 3.0,
            k: 1.0,
            n,
            delta_grid: dyadic_grid(10),
            p_exponent: 2.0,
            m_max: 8,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(invalid("V must be a positive real"));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(invalid("t must be a positive real"));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(invalid("K must be a positive real"));
        }
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if self.delta_grid.is_empty() {
            return Err(invalid("delta grid must be nonempty"));
        }
        if self.delta_grid.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(invalid("delta grid entries must lie in (0, 1]"));
        }
        if !(self.p_exponent >= 1.0) {
            return Err(invalid("p exponent must be at least 1"));
        }
        if self.m_max == 0 {
            return Err(invalid("m_max must be at least 1"));
        }
        Ok(self)
    }

    pub fn with_t(mut self, t: f64) -> Result<Self> {
        self.t = t;
        self.validated()
    }

    pub fn with_k(mut self, k: f64) -> Result<Self> {
        self.k = k;
        self.validated()
    }

    pub fn with_delta_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        self.delta_grid = grid;
        self.validated()
    }

    pub fn with_p_exponent(mut self, p: f64) -> Result<Self> {
        self.p_exponent = p;
        self.validated()
    }

    pub fn with_m_max(mut self, m_max: usize) -> Result<Self> {
        self.m_max = m_max;
        self.validated()
    }

    /// `α = 2V/(V+2) ∈ (0, 2)`.
    pub fn alpha(&self) -> f64 {
        2.0 * self.v / (self.v + 2.0)
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }

    /// `log(n/δ)`, floored at 1 so complexity terms stay nonnegative when δ
    /// approaches n (the floor is part of every report that uses it).
    pub fn log_n_over(&self, delta: f64) -> f64 {
        (self.n_f64() / delta).ln().max(1.0)
    }
}

/// One bound evaluation as a term breakdown. `total` is re-derivable from
/// the listed terms via [`BoundReport::recombine`]; `curve` carries the
/// per-δ totals of the outer margin scan for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub chosen_delta: f64,
    pub chosen_gamma: Option<f64>,
    pub chosen_d: Option<usize>,
    pub chosen_m: Option<usize>,
    pub margin_term: f64,
    pub complexity_term: f64,
    pub confidence_term: f64,
    pub total: f64,
    pub valid: bool,
    pub notes: Vec<String>,
    pub extras: BTreeMap<String, f64>,
    pub curve: Vec<(f64, f64)>,
}

impl BoundReport {
    pub fn new(bound_name: impl Into<String>) -> Self {
        BoundReport {
            bound_name: bound_name.into(),
            chosen_delta: f64::NAN,
            chosen_gamma: None,
            chosen_d: None,
            chosen_m: None,
            margin_term: 0.0,
            complexity_term: 0.0,
            confidence_term: 0.0,
            total: f64::NAN,
            valid: true,
            notes: Vec::new(),
            extras: BTreeMap::new(),
            curve: Vec::new(),
        }
    }

    /// Recomputes `total` from the emitted terms using the bound's combining
    /// formula. Returns `None` for unknown bound names.
    pub fn recombine(&self, params: &BoundParams) -> Option<f64> {
        match self.bound_name.as_str() {
            "schapire_margin" | "margin_nolog" | "zero_error_rate" | "linfty_entropy" | "breiman_min_margin"
            | "gamma_dim" | "pointwise_variance" | "cluster_variance" | "base_covering"
            | "example_rate_polynomial" | "example_rate_exponential" => {
                Some(self.margin_term + self.complexity_term + self.confidence_term)
            }
            // (√U + √(P_n + U))² with U split as complexity + confidence.
            "effective_dim" => {
                let u = self.complexity_term + self.confidence_term;
                Some((u.sqrt() + (self.margin_term + u).sqrt()).powi(2))
            }
            // Ratio bound solved through y = x + a√y + b y^β with
            // β = 1/2 − α/4; terms are (x, a, b).
            "gamma_dim_ratio" => {
                let beta = 0.5 - params.alpha() / 4.0;
                sparsity::solve_concave(self.margin_term, self.complexity_term, self.confidence_term, beta)
                    .ok()
            }
            _ => None,
        }
    }
}
