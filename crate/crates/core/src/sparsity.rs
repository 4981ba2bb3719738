//! Weight-sparsity complexity measures (γ-dimension, effective dimension),
//! the two inequality solvers used to invert ratio-type bounds, and the
//! sparsity-family bound evaluators.

use crate::data::Dataset;
use crate::ensemble::ConvexEnsemble;
use crate::error::{invalid, Result};
use crate::margins::{MarginProfile, RampLoss};
use crate::report::{BoundParams, BoundReport};

/// Approximate γ-dimension `d(f; γ)`: the smallest `d ≥ 0` whose tail mass
/// beyond the `d` largest |weights| is at most γ. Nonincreasing in γ;
/// `d(f; 1) = 0` for normalized ensembles.
pub fn gamma_dimension(f: &ConvexEnsemble, gamma: f64) -> Result<usize> {
    if !(gamma >= 0.0) {
        return Err(invalid(format!("gamma must be nonnegative, got {gamma}")));
    }
    f.require_normalized("gamma_dimension")?;
    // The total mass of a normalized ensemble is 1, so the empty head always
    // works at γ ≥ 1 (the summed weights may exceed 1 by an ulp; this keeps
    // d(f; 1) = 0 exact).
    if gamma >= 1.0 {
        return Ok(0);
    }
    for d in 0..=f.len() {
        if f.tail_weight(d)? <= gamma {
            return Ok(d);
        }
    }
    Ok(f.len())
}

/// Effective dimension `e_n(f, δ) = min_{0≤d≤T} (d + 2γ_d²(f)/δ² · log n)`,
/// by exact scan over d. Always at most `2 log n / δ²` (take d = 0).
pub fn effective_dimension(f: &ConvexEnsemble, delta: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("effective dimension needs n >= 2"));
    }
    Ok(effective_dimension_with_log(f, delta, (n as f64).ln())?.0)
}

/// Same scan with the log factor supplied directly; returns the attaining d.
pub fn effective_dimension_with_log(
    f: &ConvexEnsemble,
    delta: f64,
    ln_n: f64,
) -> Result<(f64, usize)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    f.require_normalized("effective_dimension")?;
    let mut best = f64::INFINITY;
    let mut best_d = 0;
    for d in 0..=f.len() {
        let g = f.tail_weight(d)?;
        let value = d as f64 + 2.0 * g * g / (delta * delta) * ln_n;
        if value < best {
            best = value;
            best_d = d;
        }
    }
    Ok((best, best_d))
}

/// The concentration shape `φ(a, b) = (a − b)²/a · 1{a ≥ b}` (0 at a = 0).
pub fn phi(a: f64, b: f64) -> f64 {
    if a <= 0.0 || a < b {
        0.0
    } else {
        (a - b) * (a - b) / a
    }
}

/// Largest `a ≥ b` with `φ(a, b) ≤ c`: the exact quadratic root
/// `a = b + c/2 + √(bc + c²/4)`.
pub fn solve_phi(b: f64, c: f64) -> f64 {
    b + c / 2.0 + (b * c + c * c / 4.0).sqrt()
}

/// The relaxed closed form `(√c + √(b + c))²` used verbatim by the sparsity
/// bound statement; always at least [`solve_phi`].
pub fn solve_phi_relaxed(b: f64, c: f64) -> f64 {
    let root = c.sqrt() + (b + c).sqrt();
    root * root
}

const CONCAVE_MAX_ITERS: usize = 10_000;

/// Largest solution of `y = x + a·y^{1/2} + b·y^β` for β ∈ (0, 1), found by
/// the monotone fixed-point iteration started from `(x + a + b + 1)²`, which
/// converges downward by concavity. Nondecreasing in each of x, a, b.
pub fn solve_concave(x: f64, a: f64, b: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("x", x), ("a", a), ("b", b)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    let rhs = |y: f64| x + a * y.sqrt() + b * y.powf(beta);
    let mut y = (x + a + b + 1.0).powi(2);
    for _ in 0..CONCAVE_MAX_ITERS {
        let next = rhs(y);
        let tol = 1e-13f64.max(4.0 * f64::EPSILON * y.abs());
        if (next - y).abs() <= tol {
            return Ok(next);
        }
        y = next;
    }
    Err(crate::error::Error::NonConvergence(format!(
        "solve_concave(x={x}, a={a}, b={b}, beta={beta})"
    )))
}

/// Shared convex-hull entropy rate `(γ/δ)^{2α/(2+α)} · n^{−2/(α+2)}`. Both
/// the zero-error bound (its γ = 1 case) and the γ-dimension bound use this
/// exact expression, so their totals compare term-for-term.
fn hull_rate_term(alpha: f64, n: f64, gamma: f64, delta: f64) -> f64 {
    (gamma / delta).powf(2.0 * alpha / (2.0 + alpha)) * n.powf(-2.0 / (alpha + 2.0))
}

/// Kind selector for the reference bounds evaluated by [`classic_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicKind {
    /// Margin bound with the log² factor.
    SchapireMargin,
    /// Same shape without the logarithmic factor.
    MarginNolog,
    /// Zero-error-case rate bound.
    ZeroErrorRate,
    /// L∞-entropy form; needs `n_infty`.
    LinftyEntropy,
    /// Finite-class minimal-margin bound; needs `card_h`.
    BreimanMinMargin,
}

impl ClassicKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassicKind::SchapireMargin => "schapire_margin",
            ClassicKind::MarginNolog => "margin_nolog",
            ClassicKind::ZeroErrorRate => "zero_error_rate",
            ClassicKind::LinftyEntropy => "linfty_entropy",
            ClassicKind::BreimanMinMargin => "breiman_min_margin",
        }
    }

    pub fn parse(name: &str) -> Option<ClassicKind> {
        match name {
            "schapire_margin" => Some(ClassicKind::SchapireMargin),
            "margin_nolog" => Some(ClassicKind::MarginNolog),
            "zero_error_rate" => Some(ClassicKind::ZeroErrorRate),
            "linfty_entropy" => Some(ClassicKind::LinftyEntropy),
            "breiman_min_margin" => Some(ClassicKind::BreimanMinMargin),
            _ => None,
        }
    }
}

/// Kind-specific inputs for [`classic_bound`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicExtras {
    /// L∞ base covering number of the classifier (ε-independent).
    pub n_infty: Option<f64>,
    /// Cardinality of the base class (or its stand-in on this sample).
    pub card_h: Option<f64>,
}

/// Evaluates one of the five reference bounds over the δ grid (the
/// minimal-margin bound is evaluated at δ_* instead of a grid).
pub fn classic_bound(
    kind: ClassicKind,
    profile: &MarginProfile,
    params: &BoundParams,
    extras: &ClassicExtras,
) -> Result<BoundReport> {
    let n = params.n_f64();
    let k = params.k;
    let t = params.t;
    let mut report = BoundReport::new(kind.name());

    if kind == ClassicKind::BreimanMinMargin {
        let card = extras
            .card_h
            .ok_or_else(|| invalid("breiman_min_margin needs card_h (finite base-class cardinality)"))?;
        if !(card > 1.0) {
            return Err(invalid("card_h must exceed 1"));
        }
        let delta_star = profile.min_margin();
        let precondition = delta_star >= (32.0 / card).sqrt();
        let mut complexity = k * card.ln() / (n * delta_star * delta_star);
        if !complexity.is_finite() {
            // A zero minimal margin sends the formula to infinity; clamp so
            // the report document stays serializable. The validity flag is
            // off in this regime anyway.
            complexity = f64::MAX;
            report.notes.push("complexity overflow: minimal margin is zero".into());
        }
        report.chosen_delta = delta_star;
        report.margin_term = 0.0;
        report.complexity_term = complexity;
        report.confidence_term = k * t / n;
        report.total = report.margin_term + report.complexity_term + report.confidence_term;
        report.valid = precondition && delta_star > 0.0;
        if !report.valid {
            report.notes.push(format!(
                "precondition failed: need min margin >= sqrt(32/N) = {:.6}, got {delta_star:.6}",
                (32.0 / card).sqrt()
            ));
        }
        report.extras.insert("card_h".into(), card);
        return Ok(report);
    }

    let mut best: Option<(f64, f64, f64, f64, f64)> = None; // (total, delta, margin, complexity, confidence)
    for &delta in &params.delta_grid {
        let p_n = profile.cdf(delta);
        let log_nd = params.log_n_over(delta);
        let (margin, complexity, confidence) = match kind {
            ClassicKind::SchapireMargin => (
                p_n,
                k * (params.v * log_nd * log_nd / (n * delta * delta)).sqrt(),
                k * (t / n).sqrt(),
            ),
            ClassicKind::MarginNolog => (
                p_n,
                k * (params.v / (n * delta * delta)).sqrt(),
                k * (t / n).sqrt(),
            ),
            ClassicKind::ZeroErrorRate => {
                let alpha = params.alpha();
                (
                    k * p_n,
                    k * hull_rate_term(alpha, n, 1.0, delta),
                    k * t / n,
                )
            }
            ClassicKind::LinftyEntropy => {
                let n_inf = extras
                    .n_infty
                    .ok_or_else(|| invalid("linfty_entropy needs n_infty"))?;
                if !(n_inf >= 1.0) {
                    return Err(invalid("n_infty must be at least 1"));
                }
                (k * p_n, k * n_inf.ln() / n, k * t / n)
            }
            ClassicKind::BreimanMinMargin => unreachable!(),
        };
        let total = margin + complexity + confidence;
        report.curve.push((delta, total));
        let replace = match best {
            None => true,
            Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
        };
        if replace {
            best = Some((total, delta, margin, complexity, confidence));
        }
    }
    let (total, delta, margin, complexity, confidence) = best.expect("nonempty grid");
    report.chosen_delta = delta;
    report.margin_term = margin;
    report.complexity_term = complexity;
    report.confidence_term = confidence;
    report.total = total;
    Ok(report)
}

/// Candidate γ values where the inner infimum over γ can change: the tail
/// weights of every head size (the exact breakpoints of `d(f; ·)`), the
/// dyadic grid, and 1.
fn gamma_candidates(f: &ConvexEnsemble, params: &BoundParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(f.len() + params.delta_grid.len() + 2);
    for d in 0..=f.len() {
        out.push(f.tail_weight(d)?);
    }
    out.extend(params.delta_grid.iter().copied().filter(|g| *g <= 1.0));
    out.push(1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// γ-dimension bound: outer infimum over the δ grid, inner infimum over γ of
/// `d(f;γ)/n · log(n/δ) + (γ/δ)^{2α/(2+α)} n^{−2/(α+2)}`, evaluated exactly
/// at the tail-weight breakpoints. Its γ = 1 branch reproduces the
/// zero-error rate bound, so its total never exceeds that bound's.
pub fn bound_gamma_dim(
    f: &ConvexEnsemble,
    profile: &MarginProfile,
    params: &BoundParams,
) -> Result<BoundReport> {
    f.require_normalized("bound_gamma_dim")?;
    let n = params.n_f64();
    let alpha = params.alpha();
    let k = params.k;
    let gammas = gamma_candidates(f, params)?;

    let mut report = BoundReport::new("gamma_dim");
    let mut best: Option<(f64, f64, f64, usize, f64, f64)> = None; // total, delta, gamma, d, margin, complexity
    for &delta in &params.delta_grid {
        let p_n = profile.cdf(delta);
        let log_nd = params.log_n_over(delta);
        let mut inner_best: Option<(f64, f64, usize)> = None; // value, gamma, d
        for &gamma in &gammas {
            let d = gamma_dimension(f, gamma)?;
            let value = d as f64 / n * log_nd + hull_rate_term(alpha, n, gamma, delta);
            let replace = match inner_best {
                None => true,
                Some((bv, bg, _)) => value < bv || (value == bv && gamma < bg),
            };
            if replace {
                inner_best = Some((value, gamma, d));
            }
        }
        let (inner, gamma, d) = inner_best.expect("gamma candidates nonempty");
        // Same term-by-term association as the zero-error bound, so the
        // γ = 1 branch reproduces it exactly.
        let total = k * p_n + k * inner + k * params.t / n;
        report.curve.push((delta, total));
        let replace = match best {
            None => true,
            Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
        };
        if replace {
            best = Some((total, delta, gamma, d, k * p_n, k * inner));
        }
    }
    let (total, delta, gamma, d, margin, complexity) = best.expect("nonempty grid");
    report.chosen_delta = delta;
    report.chosen_gamma = Some(gamma);
    report.chosen_d = Some(d);
    report.margin_term = margin;
    report.complexity_term = complexity;
    report.confidence_term = k * params.t / n;
    report.total = total;
    Ok(report)
}

/// Ratio-form sparsity bound: for each δ in the grid and each γ breakpoint,
/// inverts `a ≤ b + u a^{1/2} + v a^{1/2−α/4}` where b is the empirical
/// margin-loss mean, `u = K(√(d(f;γ)/n · log(n/δ)) + √(t/n))` and
/// `v = K (γ/δ)^{α/2} n^{−1/2}`; reports the smallest solved total.
pub fn bound_gamma_dim_ratio(
    f: &ConvexEnsemble,
    data: &Dataset,
    params: &BoundParams,
) -> Result<BoundReport> {
    f.require_normalized("bound_gamma_dim_ratio")?;
    let margins = f.margins_on(data)?;
    let n = params.n_f64();
    let alpha = params.alpha();
    let beta = 0.5 - alpha / 4.0;
    let k = params.k;
    let gammas = gamma_candidates(f, params)?;

    let mut report = BoundReport::new("gamma_dim_ratio");
    let mut best: Option<(f64, f64, f64, usize, f64, f64, f64)> = None;
    for &delta in &params.delta_grid {
        let ramp = RampLoss::margin_loss(delta)?;
        let b: f64 = margins.iter().map(|&m| ramp.value(m)).sum::<f64>() / n;
        let log_nd = params.log_n_over(delta);
        let mut delta_best: Option<(f64, f64, usize, f64, f64)> = None; // total, gamma, d, u, v
        for &gamma in &gammas {
            let d = gamma_dimension(f, gamma)?;
            let u = k * ((d as f64 / n * log_nd).sqrt() + (params.t / n).sqrt());
            let v = k * (gamma / delta).powf(alpha / 2.0) / n.sqrt();
            let total = solve_concave(b, u, v, beta)?;
            let replace = match delta_best {
                None => true,
                Some((bt, bg, ..)) => total < bt || (total == bt && gamma < bg),
            };
            if replace {
                delta_best = Some((total, gamma, d, u, v));
            }
        }
        let (total, gamma, d, u, v) = delta_best.expect("gamma candidates nonempty");
        report.curve.push((delta, total));
        let replace = match best {
            None => true,
            Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
        };
        if replace {
            best = Some((total, delta, gamma, d, b, u, v));
        }
    }
    let (total, delta, gamma, d, b, u, v) = best.expect("nonempty grid");
    report.chosen_delta = delta;
    report.chosen_gamma = Some(gamma);
    report.chosen_d = Some(d);
    // Terms are the solver inputs: margin = b, complexity = u, confidence = v;
    // recombine re-runs the inversion.
    report.margin_term = b;
    report.complexity_term = u;
    report.confidence_term = v;
    report.total = total;
    report
        .notes
        .push("terms are solver inputs (b, u, v) of a <= b + u*sqrt(a) + v*a^(1/2-alpha/4)".into());
    Ok(report)
}

/// Explicit-form companion of the sparsity bound:
/// `(1+ε) P_n + (2 + 1/ε) U`.
pub fn sparsity_explicit_total(p_n: f64, u: f64, epsilon: f64) -> f64 {
    (1.0 + epsilon) * p_n + (2.0 + 1.0 / epsilon) * u
}

/// Sparsity (effective-dimension) bound:
/// `inf_δ (U^{1/2} + (P_n(yf ≤ δ) + U)^{1/2})²` with
/// `U = K(V e_n(f, δ)/n · log(n/δ) + t/n)`.
pub fn bound_sparsity(
    f: &ConvexEnsemble,
    profile: &MarginProfile,
    params: &BoundParams,
) -> Result<BoundReport> {
    f.require_normalized("bound_sparsity")?;
    let n = params.n_f64();
    let ln_n = n.ln();
    let k = params.k;

    let mut report = BoundReport::new("effective_dim");
    let mut best: Option<(f64, f64, usize, f64, f64, f64)> = None; // total, delta, d, p_n, complexity, confidence
    for &delta in &params.delta_grid {
        let p_n = profile.cdf(delta);
        let (e_n, d) = effective_dimension_with_log(f, delta, ln_n)?;
        let complexity = k * params.v * e_n / n * params.log_n_over(delta);
        let confidence = k * params.t / n;
        let u = complexity + confidence;
        let total = solve_phi_relaxed(p_n, u);
        report.curve.push((delta, total));
        let replace = match best {
            None => true,
            Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
        };
        if replace {
            best = Some((total, delta, d, p_n, complexity, confidence));
        }
    }
    let (total, delta, d, p_n, complexity, confidence) = best.expect("nonempty grid");
    report.chosen_delta = delta;
    report.chosen_d = Some(d);
    report.margin_term = p_n;
    report.complexity_term = complexity;
    report.confidence_term = confidence;
    report.total = total;
    let u = complexity + confidence;
    report
        .extras
        .insert("explicit_eps1".into(), sparsity_explicit_total(p_n, u, 1.0));
    report.extras.insert("u".into(), u);
    Ok(report)
}

/// Weight-decay regime for [`example_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// `λ_j ∼ j^{−β}`, β > 1.
    Polynomial,
    /// `λ_j ∼ e^{−j}`.
    Exponential,
}

fn next_below(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}

/// Closed-form zero-error rates for polynomially or exponentially decaying
/// weights, evaluated at the minimal margin. The zero-error premise is
/// enforced by evaluating the margin distribution one ulp below δ_*, where
/// it vanishes by definition.
pub fn example_rate(
    kind: RateKind,
    beta: f64,
    profile: &MarginProfile,
    params: &BoundParams,
) -> Result<BoundReport> {
    if kind == RateKind::Polynomial && !(beta > 1.0) {
        return Err(invalid(format!(
            "polynomial rate requires beta > 1, got {beta}"
        )));
    }
    let delta_star = profile.min_margin();
    if !(delta_star > 0.0) {
        return Err(invalid(format!(
            "zero-error rates need a positive minimal margin, got {delta_star}"
        )));
    }
    let n = params.n_f64();
    let k = params.k;
    let log_star = params.log_n_over(delta_star);
    let margin = profile.cdf(next_below(delta_star)); // 0 by construction
    let complexity = match kind {
        RateKind::Polynomial => {
            k * params.v / (n * delta_star.powf(2.0 / (2.0 * beta - 1.0))) * log_star * log_star
        }
        RateKind::Exponential => k * params.v / n * log_star * log_star,
    };
    let confidence = k * params.t / n;

    let mut report = BoundReport::new(match kind {
        RateKind::Polynomial => "example_rate_polynomial",
        RateKind::Exponential => "example_rate_exponential",
    });
    report.chosen_delta = delta_star;
    report.margin_term = margin;
    report.complexity_term = complexity;
    report.confidence_term = confidence;
    report.total = margin + complexity + confidence;
    if kind == RateKind::Polynomial {
        report
            .extras
            .insert("delta_star_exponent".into(), 2.0 / (2.0 * beta - 1.0));
    }
    Ok(report)
}
