//! Empirical covering numbers of hypothesis sets and of bases of a convex
//! combination, entropy integrals and their fixed points, the adaptive
//! covering bound, and a Monte Carlo Rademacher-supremum estimate.

use rand::Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::ensemble::ConvexEnsemble;
use crate::error::{invalid, Result};
use crate::exec;
use crate::margins::MarginProfile;
use crate::quad::adaptive_simpson;
use crate::report::{BoundParams, BoundReport};
use crate::rng;
use crate::stump::Stump;

const QUAD_REL_TOL: f64 = 1e-8;
/// Everything below this ε is charged to the closed-form endpoint bound
/// `∫_0^s √log(1/u) du ≤ 2s√log(1/s)`; at 1e-12 the charge is ≤ 1.1e-11.
const EPS_FLOOR: f64 = 1e-12;

/// Empirical L_p(P_n) metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    L1,
    L2,
    Linf,
}

impl Metric {
    pub fn parse(name: &str) -> Option<Metric> {
        match name.to_ascii_lowercase().as_str() {
            "l1" => Some(Metric::L1),
            "l2" => Some(Metric::L2),
            "linf" | "linfty" => Some(Metric::Linf),
            _ => None,
        }
    }
}

/// Distance between two sample profiles. For ±1-valued profiles,
/// `L2² = 2·L1` and `Linf ∈ {0, 2}`.
pub fn profile_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n,
        Metric::L2 => {
            (a.iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    d * d
                })
                .sum::<f64>()
                / n)
                .sqrt()
        }
        Metric::Linf => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
    }
}

/// Empirical distance between two stumps over the sample.
pub fn empirical_distance(h: &Stump, g: &Stump, data: &Dataset, metric: Metric) -> f64 {
    profile_distance(&h.profile(data), &g.profile(data), metric)
}

/// Sample profiles of every term of the ensemble (support, not deduplicated).
pub fn ensemble_profiles(f: &ConvexEnsemble, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    f.check_row_width(data.p())?;
    Ok(exec::map_collect(f.len(), |j| f.terms()[j].stump.profile(data)))
}

/// Farthest-point greedy covering: repeatedly promotes the uncovered profile
/// farthest from the chosen centers (first index on ties) until everything is
/// within ε of a center. Returns the center indices and their count. The
/// centers form an ε-packing, so the count is sandwiched between the exact
/// covering numbers at ε and ε/2.
pub fn greedy_covering(profiles: &[Vec<f64>], eps: f64, metric: Metric) -> (Vec<usize>, usize) {
    assert!(eps > 0.0, "covering radius must be positive");
    if profiles.is_empty() {
        return (Vec::new(), 0);
    }
    let mut min_dist = vec![f64::INFINITY; profiles.len()];
    let mut centers = Vec::new();
    loop {
        let mut next: Option<usize> = None;
        let mut best = eps;
        for (j, &d) in min_dist.iter().enumerate() {
            if d > best {
                best = d;
                next = Some(j);
            }
        }
        let Some(center) = next else { break };
        centers.push(center);
        for (j, d) in min_dist.iter_mut().enumerate() {
            let dist = profile_distance(&profiles[center], &profiles[j], metric);
            if dist < *d {
                *d = dist;
            }
        }
    }
    let count = centers.len();
    (centers, count)
}

const EXACT_COVERING_CAP: usize = 12;

/// Minimal number of centers chosen from the set that cover it within ε,
/// by subset enumeration in increasing size. Only for sets of at most 12
/// hypotheses; used as the oracle side of the greedy sandwich.
pub fn exact_covering(profiles: &[Vec<f64>], eps: f64, metric: Metric) -> Result<usize> {
    if profiles.len() > EXACT_COVERING_CAP {
        return Err(invalid(format!(
            "exact covering is exponential; set size {} exceeds {EXACT_COVERING_CAP}",
            profiles.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(invalid("covering radius must be positive"));
    }
    let count = profiles.len();
    if count == 0 {
        return Ok(0);
    }
    let mut dist = vec![vec![0.0; count]; count];
    for i in 0..count {
        for j in (i + 1)..count {
            let d = profile_distance(&profiles[i], &profiles[j], metric);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    for size in 1..=count {
        for mask in 0u32..(1 << count) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let covered = (0..count).all(|j| {
                (0..count).any(|c| mask & (1 << c) != 0 && dist[c][j] <= eps)
            });
            if covered {
                return Ok(size);
            }
        }
    }
    Ok(count)
}

/// How the covering counts of a profile were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoveringSource {
    Greedy,
    Exact,
}

/// ε ↦ covering-number step function of a base of f. Counts are upper
/// estimates (greedy, over the deduplicated support base), labeled N⁺.
#[derive(Debug, Clone, Serialize)]
pub struct CoveringProfile {
    /// Decreasing ε grid.
    pub eps_grid: Vec<f64>,
    /// Covering count at each grid ε; nondecreasing along the grid.
    pub counts: Vec<usize>,
    pub metric: Metric,
    pub source: CoveringSource,
    /// Number of distinct sample profiles in the base; the constant value of
    /// the step function below the smallest grid ε.
    pub support: usize,
}

impl CoveringProfile {
    pub fn from_parts(
        eps_grid: Vec<f64>,
        counts: Vec<usize>,
        metric: Metric,
        source: CoveringSource,
        support: usize,
    ) -> Result<Self> {
        if eps_grid.len() != counts.len() {
            return Err(invalid("eps grid and counts must have equal lengths"));
        }
        if eps_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("eps grid must be strictly decreasing"));
        }
        if eps_grid.iter().any(|e| !(*e > 0.0 && *e <= 2.0)) {
            return Err(invalid("eps grid entries must lie in (0, 2]"));
        }
        if counts.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("counts must be nondecreasing as eps decreases"));
        }
        Ok(CoveringProfile { eps_grid, counts, metric, source, support })
    }

    /// Constant-N profile (handy for reference curves and tests).
    pub fn constant(count: usize, metric: Metric) -> Self {
        CoveringProfile {
            eps_grid: vec![1.0],
            counts: vec![count],
            metric,
            source: CoveringSource::Exact,
            support: count,
        }
    }

    /// Step-function lookup: the count at the largest grid ε not exceeding
    /// `eps` (an upper bound on the covering number at `eps`), extended by
    /// the support size below the grid and by the coarsest count above it.
    pub fn count_at(&self, eps: f64) -> usize {
        if self.eps_grid.is_empty() {
            return self.support;
        }
        if eps >= self.eps_grid[0] {
            return self.counts[0];
        }
        for (e, c) in self.eps_grid.iter().zip(&self.counts) {
            if *e <= eps {
                return *c;
            }
        }
        self.support
    }
}

/// Deduplicates the support of f by sample profile and covers it greedily at
/// every grid ε (default: dyadic 2^{-j} from 1 down to the smallest positive
/// pairwise distance). The deduplicated support is one valid base of f, so
/// the resulting counts upper-bound the minimal-base covering numbers.
pub fn base_covering_profile(
    f: &ConvexEnsemble,
    data: &Dataset,
    grid: Option<&[f64]>,
) -> Result<CoveringProfile> {
    let dedup = dedup_profiles(f, data)?;
    let support = dedup.len();

    let eps_grid: Vec<f64> = match grid {
        Some(g) => {
            let mut sorted = g.to_vec();
            if sorted.iter().any(|e| !(*e > 0.0 && *e <= 2.0)) {
                return Err(invalid("grid entries must lie in (0, 2]"));
            }
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.dedup();
            sorted
        }
        None => {
            let mut min_dist = f64::INFINITY;
            for i in 0..support {
                for j in (i + 1)..support {
                    let d = profile_distance(&dedup[i], &dedup[j], Metric::L2);
                    if d > 0.0 && d < min_dist {
                        min_dist = d;
                    }
                }
            }
            let mut grid = vec![1.0];
            let mut eps = 0.5;
            while min_dist.is_finite() && eps >= min_dist && grid.len() < 40 {
                grid.push(eps);
                eps /= 2.0;
            }
            grid
        }
    };

    let mut counts: Vec<usize> =
        exec::map_collect(eps_grid.len(), |i| greedy_covering(&dedup, eps_grid[i], Metric::L2).1);
    // Greedy counts are almost always monotone already; enforce the step
    // function invariant (a running max of upper bounds is an upper bound).
    for i in 1..counts.len() {
        counts[i] = counts[i].max(counts[i - 1]);
    }
    CoveringProfile::from_parts(eps_grid, counts, Metric::L2, CoveringSource::Greedy, support)
}

fn dedup_profiles(f: &ConvexEnsemble, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let profiles = ensemble_profiles(f, data)?;
    let mut keyed: Vec<(Vec<u64>, usize)> = profiles
        .iter()
        .enumerate()
        .map(|(j, p)| (p.iter().map(|v| v.to_bits()).collect(), j))
        .collect();
    keyed.sort();
    let mut out = Vec::new();
    let mut prev: Option<Vec<u64>> = None;
    for (key, j) in keyed {
        if prev.as_ref() != Some(&key) {
            out.push(profiles[j].clone());
            prev = Some(key);
        }
    }
    Ok(out)
}

/// Number of distinct sample sign-profiles in the support of f: the
/// ε-independent L∞ base covering number of a ±1-valued combination
/// (at most min(T, 2^n)).
pub fn n_infty(f: &ConvexEnsemble, data: &Dataset) -> Result<usize> {
    Ok(dedup_profiles(f, data)?.len())
}

/// `∫_a^b sqrt(max(c·ln(1/ε), 0)) dε` by adaptive Simpson.
fn sqrt_log_cell(scale: f64, a: f64, b: f64) -> f64 {
    if b <= a || scale <= 0.0 {
        return 0.0;
    }
    adaptive_simpson(
        &move |eps: f64| (scale * (1.0 / eps).ln()).max(0.0).sqrt(),
        a,
        b,
        QUAD_REL_TOL,
    )
}

/// The endpoint bound `∫_0^s √log(1/u) du ≤ 2 s √log(1/s)` charged to the
/// sub-floor piece of the integral.
fn endpoint_charge(count: usize, s: f64) -> f64 {
    if count == 0 || s <= 0.0 {
        return 0.0;
    }
    (count as f64).sqrt() * 2.0 * s * (1.0 / s).ln().max(0.0).sqrt()
}

fn entropy_integral_impl(profile: &CoveringProfile, delta: f64) -> f64 {
    if profile.support == 0 {
        return 0.0;
    }
    let delta = delta.min(1.0);
    if delta <= 0.0 {
        return 0.0;
    }
    let lo = EPS_FLOOR.min(delta / 2.0);
    // Cell boundaries: the floor, every grid point inside (lo, delta), delta.
    let mut bounds = vec![lo];
    for &e in profile.eps_grid.iter().rev() {
        if e > lo && e < delta {
            bounds.push(e);
        }
    }
    bounds.push(delta);
    let mut total = endpoint_charge(profile.count_at(lo / 2.0), lo);
    for pair in bounds.windows(2) {
        let count = profile.count_at(pair[0]);
        total += sqrt_log_cell(count as f64, pair[0], pair[1]);
    }
    total
}

/// Entropy integral `ψ̂_n(f; δ) = ∫_0^δ √(N(ε) log(1/ε)) dε` of a covering
/// profile, by exact per-cell quadrature (N is constant on grid cells).
/// Bounded by `2√(N∞) δ √(log 1/δ)` for δ < e^{-1}.
pub fn entropy_integral(profile: &CoveringProfile, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(entropy_integral_impl(profile, delta))
}

fn capped_integrand(profile: &CoveringProfile, v: f64, eps_floor: f64, eps: f64) -> f64 {
    let u = eps.max(eps_floor);
    let raw = profile.count_at(u) as f64 * (1.0 / u).ln();
    let cap = u.powf(-2.0 * v / (v + 2.0));
    raw.min(cap).max(0.0).sqrt()
}

fn capped_entropy_integral_impl(profile: &CoveringProfile, params: &BoundParams, delta: f64) -> f64 {
    if profile.support == 0 {
        return 0.0;
    }
    let delta = delta.min(1.0);
    if delta <= 0.0 {
        return 0.0;
    }
    let eps0 = (params.t / params.n_f64()).sqrt();
    let frozen_end = eps0.min(delta);
    // Constant integrand on [0, min(ε0, δ)].
    let mut total = frozen_end * capped_integrand(profile, params.v, eps0, frozen_end);
    if frozen_end < delta {
        let lo = frozen_end.max(EPS_FLOOR.min(delta / 2.0));
        let mut bounds = vec![lo];
        for &e in profile.eps_grid.iter().rev() {
            if e > lo && e < delta {
                bounds.push(e);
            }
        }
        bounds.push(delta);
        for pair in bounds.windows(2) {
            if pair[1] <= pair[0] {
                continue;
            }
            total += adaptive_simpson(
                &|eps: f64| capped_integrand(profile, params.v, eps0, eps),
                pair[0],
                pair[1],
                QUAD_REL_TOL,
            );
        }
    }
    total
}

/// Capped entropy integral: the integrand is the pointwise minimum of the
/// base entropy `N(ε') log(1/ε')` and the whole-hull rate `ε'^{-2V/(V+2)}`,
/// evaluated at `ε' = ε ∨ √(t/n)`. Never exceeds [`entropy_integral`].
pub fn capped_entropy_integral(
    profile: &CoveringProfile,
    params: &BoundParams,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(capped_entropy_integral_impl(profile, params, delta))
}

/// Evaluator for a concave nondecreasing ψ with ψ(0) = 0. Profile-backed
/// curves cache cumulative cell integrals at the grid nodes so repeated
/// evaluation stays cheap inside the fixed-point iteration.
pub struct EntropyCurve {
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl EntropyCurve {
    /// ψ̂(x) = entropy integral of the covering profile up to x.
    pub fn from_profile(profile: &CoveringProfile) -> Self {
        let profile = profile.clone();
        let nodes = curve_nodes(&profile.eps_grid);
        let cums: Vec<f64> = nodes.iter().map(|&x| entropy_integral_impl(&profile, x)).collect();
        EntropyCurve {
            eval: Box::new(move |x: f64| {
                let x = x.clamp(0.0, 1.0);
                if x == 0.0 {
                    return 0.0;
                }
                match nodes.partition_point(|&node| node <= x).checked_sub(1) {
                    None => entropy_integral_impl(&profile, x),
                    Some(i) => {
                        cums[i] + sqrt_log_cell(profile.count_at(nodes[i]) as f64, nodes[i], x)
                    }
                }
            }),
        }
    }

    /// Capped variant (frozen below √(t/n), whole-hull rate cap).
    pub fn capped(profile: &CoveringProfile, params: &BoundParams) -> Self {
        let profile = profile.clone();
        let params = params.clone();
        let eps0 = (params.t / params.n_f64()).sqrt();
        let mut nodes = curve_nodes(&profile.eps_grid);
        if eps0 > 0.0 && eps0 < 1.0 {
            nodes.push(eps0);
            nodes.sort_by(f64::total_cmp);
            nodes.dedup();
        }
        let cums: Vec<f64> =
            nodes.iter().map(|&x| capped_entropy_integral_impl(&profile, &params, x)).collect();
        EntropyCurve {
            eval: Box::new(move |x: f64| {
                let x = x.clamp(0.0, 1.0);
                if x == 0.0 {
                    return 0.0;
                }
                match nodes.partition_point(|&node| node <= x).checked_sub(1) {
                    None => capped_entropy_integral_impl(&profile, &params, x),
                    Some(i) => {
                        cums[i]
                            + adaptive_simpson(
                                &|eps: f64| capped_integrand(&profile, params.v, eps0, eps),
                                nodes[i],
                                x,
                                QUAD_REL_TOL,
                            )
                    }
                }
            }),
        }
    }

    /// Arbitrary curve (the caller guarantees concavity and ψ(0) = 0).
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        EntropyCurve { eval: Box::new(f) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

fn curve_nodes(eps_grid: &[f64]) -> Vec<f64> {
    let mut nodes: Vec<f64> = eps_grid.iter().rev().copied().filter(|e| *e < 1.0).collect();
    nodes.insert(0, EPS_FLOOR);
    nodes
}

const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Largest solution of `ε = ψ(δ√ε)/(δ√n)` by fixed-point iteration from
/// ε = 1; concavity of ψ makes the iteration monotone from either side of
/// the crossing. Returns 0 when ψ vanishes.
pub fn fixed_point(psi: &EntropyCurve, delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let scale = delta * (n as f64).sqrt();
    let step = |eps: f64| psi.eval(delta * eps.max(0.0).sqrt()) / scale;
    let mut eps = 1.0f64;
    // The stop tolerance leaves room for quadrature-level jitter in ψ while
    // keeping the final residual comfortably below 1e-10.
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = step(eps);
        if (next - eps).abs() <= 5e-11f64.max(4.0 * f64::EPSILON * eps.abs()) {
            return Ok(next.max(0.0));
        }
        eps = next;
    }
    Err(crate::error::Error::NonConvergence(format!(
        "fixed_point(delta = {delta}, n = {n})"
    )))
}

/// Diagnostic reference value of the restricted-hull entropy at radius
/// `(2+C)ε`: the step-function count at ε times `log(1/ε)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HullEntropyPoint {
    pub radius: f64,
    pub value: f64,
}

pub fn hull_entropy_reference(
    profile: &CoveringProfile,
    eps: f64,
    c: f64,
) -> Result<HullEntropyPoint> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(c >= 0.0) {
        return Err(invalid("C must be nonnegative"));
    }
    Ok(HullEntropyPoint {
        radius: (2.0 + c) * eps,
        value: profile.count_at(eps) as f64 * (1.0 / eps).ln(),
    })
}

/// Adaptive covering bound with its three complexity variants per δ: the
/// entropy fixed point ε̂_n(f, δ), the capped-entropy fixed point, and the
/// simpler substitute `N∞/n · log(n/(δ N∞))`. The report's total is the best
/// variant; all three grid infima are reported.
pub fn bound_base_covering(
    f: &ConvexEnsemble,
    data: &Dataset,
    profile: &MarginProfile,
    params: &BoundParams,
) -> Result<BoundReport> {
    f.require_normalized("bound_base_covering")?;
    let cov = base_covering_profile(f, data, None)?;
    let n_inf = cov.support.max(1) as f64;
    let psi = EntropyCurve::from_profile(&cov);
    let psi_cap = EntropyCurve::capped(&cov, params);
    let n = params.n_f64();
    let k = params.k;

    let mut report = BoundReport::new("base_covering");
    // (total, delta, complexity) per variant.
    let mut best: [Option<(f64, f64, f64)>; 3] = [None, None, None];
    for &delta in &params.delta_grid {
        let margin = profile.cdf(delta);
        let confidence = params.t / (n * delta * delta);
        let eps_hat = fixed_point(&psi, delta, params.n)?;
        let eps_cap = fixed_point(&psi_cap, delta, params.n)?;
        let simple = n_inf / n * (n / (delta * n_inf)).ln().max(1.0);
        for (slot, complexity) in [eps_hat, eps_cap, simple].into_iter().enumerate() {
            let total = k * (margin + complexity + confidence);
            if slot == 0 {
                report.curve.push((delta, total));
            }
            let replace = match best[slot] {
                None => true,
                Some((bt, bd, _)) => total < bt || (total == bt && delta < bd),
            };
            if replace {
                best[slot] = Some((total, delta, complexity));
            }
        }
    }
    let entropy = best[0].expect("nonempty grid");
    let capped = best[1].expect("nonempty grid");
    let simple = best[2].expect("nonempty grid");
    report.extras.insert("total_entropy".into(), entropy.0);
    report.extras.insert("total_capped".into(), capped.0);
    report.extras.insert("total_simple".into(), simple.0);
    report.extras.insert("n_infty".into(), n_inf);
    if params.n >= 2 {
        report
            .extras
            .insert("t_over_log2_n".into(), params.t / n.ln().powi(2));
    }

    let variants = [("entropy", entropy), ("capped", capped), ("simple", simple)];
    let (name, (total, delta, complexity)) = variants
        .iter()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .copied()
        .expect("three variants");
    report.chosen_delta = delta;
    report.margin_term = k * profile.cdf(delta);
    report.complexity_term = k * complexity;
    report.confidence_term = k * params.t / (n * delta * delta);
    report.total = total;
    report.notes.push(format!("best variant: {name}"));
    report.notes.push(
        "precondition t >= C log^2 n has unknown C; see t_over_log2_n for the regime".into(),
    );
    Ok(report)
}

/// Monte Carlo estimate of the expected Rademacher supremum
/// `E_ε sup_h |n^{-1} Σ ε_i h(X_i)|` over a finite profile set.
/// Returns (mean, standard error).
pub fn rademacher_estimate(
    profiles: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if profiles.is_empty() {
        return Err(invalid("rademacher_estimate needs at least one hypothesis"));
    }
    if draws == 0 {
        return Err(invalid("draws must be at least 1"));
    }
    let n = profiles[0].len();
    if n == 0 || profiles.iter().any(|p| p.len() != n) {
        return Err(invalid("profiles must be nonempty with equal lengths"));
    }
    let (sum, sumsq) = exec::block_fold(
        draws,
        exec::REPLICATE_BLOCK,
        |range| {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for draw in range {
                let mut rng = rng::stream(seed, draw as u64);
                let signs: Vec<f64> =
                    (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
                let sup = profiles
                    .iter()
                    .map(|p| {
                        (p.iter().zip(&signs).map(|(v, s)| v * s).sum::<f64>() / n as f64).abs()
                    })
                    .fold(0.0, f64::max);
                sum += sup;
                sumsq += sup * sup;
            }
            (sum, sumsq)
        },
        |acc, part| (acc.0 + part.0, acc.1 + part.1),
        (0.0, 0.0),
    );
    let m = draws as f64;
    let mean = sum / m;
    let var = ((sumsq - m * mean * mean) / (m - 1.0).max(1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Mode;

    fn stump(threshold: f64, polarity: i8) -> Stump {
        Stump::new(0, threshold, polarity).unwrap()
    }

    fn grid_data(n: usize) -> Dataset {
        Dataset::from_rows(
            (0..n).map(|i| vec![i as f64]).collect(),
            vec![1.0; n],
        )
        .unwrap()
    }

    #[test]
    fn distances_on_binary_profiles() {
        let data = grid_data(4);
        let a = stump(0.5, 1); // (-1, +1, +1, +1)
        let b = stump(1.5, 1); // (-1, -1, +1, +1): differ on 1 of 4 rows
        assert_eq!(empirical_distance(&a, &a, &data, Metric::L2), 0.0);
        assert_eq!(empirical_distance(&a, &b, &data, Metric::L2), 1.0); // 2√(1/4)
        assert_eq!(empirical_distance(&a, &b, &data, Metric::L1), 0.5);
        assert_eq!(empirical_distance(&a, &b, &data, Metric::Linf), 2.0);
        // h = -g everywhere: the diameter in every metric.
        let c = a.negated();
        assert_eq!(empirical_distance(&a, &c, &data, Metric::L2), 2.0);
        assert_eq!(empirical_distance(&a, &c, &data, Metric::L1), 2.0);
        assert_eq!(empirical_distance(&a, &c, &data, Metric::Linf), 2.0);
    }

    #[test]
    fn l2_squared_is_twice_l1() {
        let data = grid_data(7);
        let stumps = [stump(0.5, 1), stump(2.5, -1), stump(4.5, 1), stump(6.5, -1)];
        for i in 0..stumps.len() {
            for j in 0..stumps.len() {
                let d2 = empirical_distance(&stumps[i], &stumps[j], &data, Metric::L2);
                let d1 = empirical_distance(&stumps[i], &stumps[j], &data, Metric::L1);
                assert!((d2 * d2 - 2.0 * d1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn greedy_covering_examples() {
        let p = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(greedy_covering(&p, 0.5, Metric::L2).1, 1);

        // Two profiles at L2 distance 1 (differ on half of 8 rows by 2):
        let a = vec![1.0; 8];
        let mut b = a.clone();
        for x in b.iter_mut().take(2) {
            *x = -1.0;
        }
        let d = profile_distance(&a, &b, Metric::L2);
        assert!((d - 1.0).abs() < 1e-12);
        let set = vec![a.clone(), b.clone()];
        assert_eq!(greedy_covering(&set, 0.5, Metric::L2).1, 2);
        assert_eq!(greedy_covering(&set, 1.0, Metric::L2).1, 1);

        // ε at (or above) the diameter covers with one center.
        assert_eq!(greedy_covering(&set, 2.0, Metric::L2).1, 1);
    }

    #[test]
    fn exact_covering_examples() {
        let same = vec![vec![1.0, -1.0]; 3];
        assert_eq!(exact_covering(&same, 0.3, Metric::L2).unwrap(), 1);

        // Three mutually distance-2 profiles at ε = 1 need all three centers.
        let n = 4;
        let e1 = vec![1.0, -1.0, -1.0, -1.0];
        let e2 = vec![-1.0, 1.0, -1.0, -1.0];
        let e3 = vec![-1.0, -1.0, 1.0, -1.0];
        let d = profile_distance(&e1, &e2, Metric::L2);
        assert!((d - 2.0 * (2.0f64 / n as f64).sqrt()).abs() < 1e-12);
        let apart = vec![e1, e2, e3];
        let eps = d * 0.9;
        assert_eq!(exact_covering(&apart, eps, Metric::L2).unwrap(), 3);

        // Chain a-b-c with d(a,b) = d(b,c) = 0.8·u, d(a,c) = 1.6·u: center b
        // covers at ε = 0.8·u under L1.
        let a = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let b = vec![-1.0, -1.0, 1.0, 1.0, 1.0];
        let c = vec![-1.0, -1.0, -1.0, -1.0, 1.0];
        assert_eq!(profile_distance(&a, &b, Metric::L1), 0.8);
        assert_eq!(profile_distance(&b, &c, Metric::L1), 0.8);
        assert_eq!(profile_distance(&a, &c, Metric::L1), 1.6);
        assert_eq!(exact_covering(&[a, b, c], 0.8, Metric::L1).unwrap(), 1);

        let too_big = vec![vec![1.0]; 13];
        assert!(exact_covering(&too_big, 0.5, Metric::L2).is_err());
    }

    #[test]
    fn covering_sandwich_on_random_sets() {
        use rand::Rng;
        for trial in 0..20 {
            let mut rng = rng::stream(7000 + trial, 0);
            let n = rng.gen_range(4..10);
            let data = grid_data(n);
            let count = rng.gen_range(2..=10);
            let profiles: Vec<Vec<f64>> = (0..count)
                .map(|_| {
                    stump(rng.gen_range(-1.0..n as f64), if rng.gen_bool(0.5) { 1 } else { -1 })
                        .profile(&data)
                })
                .collect();
            for j in 0..4 {
                let eps = 2f64.powi(-j);
                let greedy = greedy_covering(&profiles, eps, Metric::L2).1;
                let exact = exact_covering(&profiles, eps, Metric::L2).unwrap();
                let exact_half = exact_covering(&profiles, eps / 2.0, Metric::L2).unwrap();
                assert!(exact <= greedy, "exact {exact} > greedy {greedy}");
                assert!(greedy <= exact_half, "greedy {greedy} > exact(ε/2) {exact_half}");
            }
        }
    }

    fn ensemble(pairs: Vec<(f64, Stump)>) -> ConvexEnsemble {
        ConvexEnsemble::from_pairs(Mode::Conv, pairs)
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn base_profile_and_n_infty() {
        let data = grid_data(8);
        let single = ensemble(vec![(1.0, stump(3.5, 1))]);
        let prof = base_covering_profile(&single, &data, None).unwrap();
        assert!(prof.counts.iter().all(|&c| c == 1));
        assert_eq!(n_infty(&single, &data).unwrap(), 1);

        // T copies of one dichotomy (different thresholds, same profile).
        let copies = ensemble(vec![
            (0.4, stump(3.25, 1)),
            (0.3, stump(3.5, 1)),
            (0.3, stump(3.75, 1)),
        ]);
        assert_eq!(n_infty(&copies, &data).unwrap(), 1);

        // 5 stumps, 3 distinct profiles.
        let mixed = ensemble(vec![
            (0.3, stump(3.25, 1)),
            (0.2, stump(3.5, 1)),
            (0.2, stump(1.5, 1)),
            (0.2, stump(1.25, 1)),
            (0.1, stump(5.5, 1)),
        ]);
        assert_eq!(n_infty(&mixed, &data).unwrap(), 3);
        let prof = base_covering_profile(&mixed, &data, None).unwrap();
        // At ε below the smallest positive distance every profile is its own
        // ball: the discrete limit equals the distinct count.
        assert_eq!(prof.count_at(1e-9), 3);
        // Two duplicate groups at ε between within-group (0) and
        // between-group distances.
        let groups = ensemble(vec![
            (0.3, stump(3.25, 1)),
            (0.3, stump(3.5, 1)),
            (0.2, stump(1.25, 1)),
            (0.2, stump(1.5, 1)),
        ]);
        let gp = base_covering_profile(&groups, &data, None).unwrap();
        let between = 2.0 * (2.0f64 / 8.0).sqrt(); // profiles differ on 2 rows
        assert_eq!(gp.count_at(between * 0.5), 2);
    }

    #[test]
    fn entropy_integral_constant_profiles() {
        // N ≡ 1 at δ = 1/e: the integral is Γ(3/2, 1) and sits below the
        // endpoint bound 2/e.
        let one = CoveringProfile::constant(1, Metric::L2);
        let delta = (-1.0f64).exp();
        let value = entropy_integral(&one, delta).unwrap();
        assert!((value - 0.507_282_233_811_773_3).abs() < 1e-6, "got {value}");
        assert!(value <= 2.0 / std::f64::consts::E + 1e-9);

        // √N factors out: N ≡ 4 doubles the N ≡ 1 value.
        let four = CoveringProfile::constant(4, Metric::L2);
        let v4 = entropy_integral(&four, delta).unwrap();
        assert!((v4 - 2.0 * value).abs() < 1e-8);

        // Degenerate empty support.
        let empty = CoveringProfile {
            eps_grid: vec![1.0],
            counts: vec![0],
            metric: Metric::L2,
            source: CoveringSource::Exact,
            support: 0,
        };
        assert_eq!(entropy_integral(&empty, 0.25).unwrap(), 0.0);

        assert!(entropy_integral(&one, 1.0).is_err());
    }

    #[test]
    fn entropy_integral_monotone_concave() {
        let profile = CoveringProfile::from_parts(
            vec![1.0, 0.5, 0.25, 0.125],
            vec![1, 2, 5, 9],
            Metric::L2,
            CoveringSource::Greedy,
            9,
        )
        .unwrap();
        let xs: Vec<f64> = (1..20).map(|i| i as f64 * 0.04).collect();
        let values: Vec<f64> = xs.iter().map(|&x| entropy_integral(&profile, x).unwrap()).collect();
        for w in values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        // midpoint concavity within quadrature slack
        for i in 1..values.len() - 1 {
            assert!(values[i] >= 0.5 * (values[i - 1] + values[i + 1]) - 1e-7);
        }
    }

    #[test]
    fn capped_never_exceeds_uncapped() {
        let profile = CoveringProfile::from_parts(
            vec![1.0, 0.5, 0.25],
            vec![1, 3, 8],
            Metric::L2,
            CoveringSource::Greedy,
            8,
        )
        .unwrap();
        let params = BoundParams::new(2.0, 256).unwrap();
        for delta in [0.05, 0.2, 0.5, 0.9] {
            let capped = capped_entropy_integral(&profile, &params, delta).unwrap();
            let full = entropy_integral(&profile, delta).unwrap();
            assert!(capped <= full + 1e-9, "capped {capped} > full {full}");
        }
        // Huge t freezes the argument: value = δ·Ĥ^{1/2}(√(t/n)).
        let big_t = BoundParams::new(2.0, 256).unwrap().with_t(1e6).unwrap();
        let delta = 0.3;
        let frozen = capped_entropy_integral(&profile, &big_t, delta).unwrap();
        let eps0 = (big_t.t / big_t.n_f64()).sqrt();
        assert!(eps0 >= delta);
        let expected = delta * capped_integrand(&profile, big_t.v, eps0, 0.0);
        assert!((frozen - expected).abs() < 1e-12);

        // Cap inactive (N ≡ 1, huge V) with tiny t: the capped integral
        // reduces to the plain entropy integral clamped at √(t/n) ≈ 0.
        let one = CoveringProfile::constant(1, Metric::L2);
        let tiny_t = BoundParams::new(1e6, 256).unwrap().with_t(1e-12).unwrap();
        for delta in [0.1, 0.3] {
            let capped = capped_entropy_integral(&one, &tiny_t, delta).unwrap();
            let full = entropy_integral(&one, delta).unwrap();
            assert!((capped - full).abs() < 1e-6, "capped {capped} vs full {full}");
        }
    }

    #[test]
    fn fixed_point_closed_forms() {
        // ψ(x) = 2x → ε = 4/n.
        let linear = EntropyCurve::from_fn(|x| 2.0 * x);
        let eps = fixed_point(&linear, 0.37, 100).unwrap();
        assert!((eps - 0.04).abs() < 1e-10);

        // ψ ≡ 0 → 0.
        let zero = EntropyCurve::from_fn(|_| 0.0);
        assert_eq!(fixed_point(&zero, 0.5, 100).unwrap(), 0.0);

        // ψ(x) = √x, δ = 1, n = 8 → ε = 8^{-2/3} = 1/4.
        let sqrt = EntropyCurve::from_fn(|x: f64| x.sqrt());
        let eps = fixed_point(&sqrt, 1.0, 8).unwrap();
        assert!((eps - 0.25).abs() < 1e-10);

        assert!(fixed_point(&linear, 0.0, 8).is_err());
    }

    #[test]
    fn fixed_point_is_largest() {
        let curve = EntropyCurve::from_fn(|x: f64| 0.8 * x.sqrt());
        let n = 64;
        let delta = 0.5;
        let star = fixed_point(&curve, delta, n).unwrap();
        let residual = (star - curve.eval(delta * star.sqrt()) / (delta * (n as f64).sqrt())).abs();
        assert!(residual < 1e-10);
        // F(ε) < ε strictly above the fixed point.
        for i in 1..=20 {
            let eps = star + i as f64 * (1.0 - star) / 20.0;
            let f_eps = curve.eval(delta * eps.sqrt()) / (delta * (n as f64).sqrt());
            assert!(f_eps < eps + 1e-12);
        }
    }

    #[test]
    fn hull_entropy_reference_values() {
        let one = CoveringProfile::constant(1, Metric::L2);
        let p = hull_entropy_reference(&one, (-1.0f64).exp(), 0.0).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        assert!((p.radius - 2.0 * (-1.0f64).exp()).abs() < 1e-15);

        let eight = CoveringProfile::constant(8, Metric::L2);
        let q = hull_entropy_reference(&eight, 0.25, 1.0).unwrap();
        assert!((q.value - 11.090_354_888_959_125).abs() < 1e-12);
        assert!((q.radius - 0.75).abs() < 1e-15);

        // Linear in N at fixed ε.
        let sixteen = CoveringProfile::constant(16, Metric::L2);
        let r = hull_entropy_reference(&sixteen, 0.25, 1.0).unwrap();
        assert!((r.value - 2.0 * q.value).abs() < 1e-12);

        assert!(hull_entropy_reference(&one, 1.0, 0.0).is_err());
    }

    #[test]
    fn base_covering_variants() {
        let data = grid_data(64);
        let f = ensemble(vec![
            (0.4, stump(10.5, 1)),
            (0.3, stump(30.5, 1)),
            (0.2, stump(50.5, 1)),
            (0.1, stump(20.5, -1)),
        ]);
        let profile = MarginProfile::from_ensemble(&f, &data).unwrap();
        let params = BoundParams::new(2.0, data.n()).unwrap();
        let report = bound_base_covering(&f, &data, &profile, &params).unwrap();
        assert!(report.extras["total_capped"] <= report.extras["total_entropy"] + 1e-9);
        assert!(report.total.is_finite());
        assert_eq!(report.extras["n_infty"], 4.0);

        // Simple L∞ substitute: N∞ = 16, n = 2^12, δ = 1/2.
        let n = 4096f64;
        let r1 = 16.0 / n * (n / (0.5 * 16.0)).ln();
        assert!((r1 - 0.024_368_455_566_560_577).abs() < 1e-12);
    }

    #[test]
    fn rademacher_zero_function_and_monotonicity() {
        let zero = vec![vec![0.0; 16]];
        let (mean, se) = rademacher_estimate(&zero, 64, 5).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(se, 0.0);

        // Enlarging the set cannot decrease the estimate (same seed).
        let data = grid_data(16);
        let h1 = stump(7.5, 1).profile(&data);
        let h2 = stump(3.5, -1).profile(&data);
        let (small, _) = rademacher_estimate(std::slice::from_ref(&h1), 256, 9).unwrap();
        let (large, _) = rademacher_estimate(&[h1, h2], 256, 9).unwrap();
        assert!(large >= small - 1e-15);

        assert!(rademacher_estimate(&[], 10, 0).is_err());
    }

    #[test]
    fn rademacher_singleton_matches_binomial_theory() {
        // E|n^{-1} Σ ε_i| ≈ √(2/(πn)) for a ±1 hypothesis, n = 400.
        let profile = vec![vec![1.0; 400]];
        let (mean, se) = rademacher_estimate(&profile, 20_000, 1234).unwrap();
        let theory = (2.0 / (std::f64::consts::PI * 400.0)).sqrt();
        assert!(
            (mean - theory).abs() <= 3.0 * se.max(1e-6),
            "mean {mean} vs theory {theory} (se {se})"
        );
    }
}
