//! Pointwise and cluster variances of a convex combination, hard-partition
//! cluster decompositions, a seeded weighted k-means search over stump
//! output profiles, and the variance/cluster bound evaluators.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::ensemble::{ConvexEnsemble, Mode};
use crate::error::{invalid, structure, Result};
use crate::exec;
use crate::margins::MarginProfile;
use crate::report::{BoundParams, BoundReport};
use crate::rng;

/// Weighted variance of `values` under `weights` (which sum to 1). Used by
/// both the pointwise and the per-cluster variance so that the single-cluster
/// decomposition reproduces the pointwise value bit-for-bit.
#[inline]
fn weighted_variance(weights: &[f64], values: &[f64]) -> f64 {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| {
            let dev = v - mean;
            w * dev * dev
        })
        .sum()
}

fn require_conv(f: &ConvexEnsemble, op: &str) -> Result<()> {
    f.require_normalized(op)?;
    if f.mode() != Mode::Conv {
        return Err(invalid(format!("{op} requires a conv-mode ensemble")));
    }
    Ok(())
}

/// Pointwise variance `σ²_λ(x) = Σ_k λ_k (h_k(x) − f(x))²`; zero exactly when
/// all positively-weighted stumps agree at x.
pub fn pointwise_variance(f: &ConvexEnsemble, row: &[f64]) -> Result<f64> {
    require_conv(f, "pointwise_variance")?;
    f.check_row_width(row.len())?;
    let weights: Vec<f64> = f.weights().collect();
    let values: Vec<f64> = f.terms().iter().map(|t| t.stump.evaluate(row)).collect();
    Ok(weighted_variance(&weights, &values))
}

/// Per-row pointwise variances over a dataset.
pub fn pointwise_variance_on(f: &ConvexEnsemble, data: &Dataset) -> Result<Vec<f64>> {
    require_conv(f, "pointwise_variance")?;
    f.check_row_width(data.p())?;
    let weights: Vec<f64> = f.weights().collect();
    Ok(exec::map_collect(data.n(), |i| {
        let row = data.row(i);
        let values: Vec<f64> = f.terms().iter().map(|t| t.stump.evaluate(row)).collect();
        weighted_variance(&weights, &values)
    }))
}

/// A hard split of an ensemble's terms into m clusters: masses `α_k`, member
/// term indices, and the normalized within-cluster weights `λ^k`.
/// `Σ_k α_k λ^k` reconstructs the original weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDecomposition {
    alphas: Vec<f64>,
    members: Vec<Vec<usize>>,
    sub_weights: Vec<Vec<f64>>,
}

impl ClusterDecomposition {
    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn sub_weights(&self) -> &[Vec<f64>] {
        &self.sub_weights
    }

    /// Checks structural consistency with `f`: members partition the term
    /// indices, masses match member weight sums, and the reconstruction
    /// `α_k λ^k_j = λ_j` holds within 1e-12.
    pub fn validate_against(&self, f: &ConvexEnsemble) -> Result<()> {
        let t = f.len();
        let mut seen = vec![false; t];
        for (k, member) in self.members.iter().enumerate() {
            if member.is_empty() {
                return Err(structure(format!("cluster {k} is empty")));
            }
            if member.len() != self.sub_weights[k].len() {
                return Err(structure(format!("cluster {k} has mismatched sub-weights")));
            }
            for &j in member {
                if j >= t {
                    return Err(structure(format!("cluster {k} references term {j} out of range")));
                }
                if seen[j] {
                    return Err(structure(format!("term {j} assigned to two clusters")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(structure("some terms are not assigned to any cluster"));
        }
        for (k, member) in self.members.iter().enumerate() {
            let sub = &self.sub_weights[k];
            let sub_sum: f64 = sub.iter().sum();
            if (sub_sum - 1.0).abs() > 1e-9 {
                return Err(structure(format!("cluster {k} sub-weights sum to {sub_sum}")));
            }
            for (&j, &w) in member.iter().zip(sub) {
                let reconstructed = self.alphas[k] * w;
                if (reconstructed - f.terms()[j].weight).abs() > 1e-12 {
                    return Err(structure(format!(
                        "reconstruction failed at term {j}: {} vs {}",
                        reconstructed,
                        f.terms()[j].weight
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Realizes the hard-partition decomposition given a term→cluster map:
/// `α_k` is the total weight of cluster k and `λ^k` its renormalized
/// weights. Cluster ids must be `0..m` with every cluster nonempty.
pub fn partition_decomposition(
    f: &ConvexEnsemble,
    assignment: &[usize],
) -> Result<ClusterDecomposition> {
    require_conv(f, "partition_decomposition")?;
    if assignment.len() != f.len() {
        return Err(invalid(format!(
            "assignment covers {} terms, ensemble has {}",
            assignment.len(),
            f.len()
        )));
    }
    let m = assignment.iter().max().map_or(0, |&x| x + 1);
    if m == 0 {
        return Err(invalid("assignment must name at least one cluster"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (j, &k) in assignment.iter().enumerate() {
        members[k].push(j);
    }
    if let Some(k) = members.iter().position(|c| c.is_empty()) {
        return Err(invalid(format!("cluster {k} is empty")));
    }
    let mut alphas = Vec::with_capacity(m);
    let mut sub_weights = Vec::with_capacity(m);
    for member in &members {
        let alpha: f64 = member.iter().map(|&j| f.terms()[j].weight).sum();
        if alpha <= 0.0 {
            return Err(invalid("cluster carries no weight mass"));
        }
        alphas.push(alpha);
        sub_weights.push(member.iter().map(|&j| f.terms()[j].weight / alpha).collect());
    }
    Ok(ClusterDecomposition { alphas, members, sub_weights })
}

/// Cluster variance `σ²(c; x) = Σ_k α_k² σ²_{λ^k}(x)`.
pub fn cluster_variance(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    row: &[f64],
) -> Result<f64> {
    require_conv(f, "cluster_variance")?;
    c.validate_against(f)?;
    f.check_row_width(row.len())?;
    Ok(cluster_variance_raw(c, f, row))
}

fn cluster_variance_raw(c: &ClusterDecomposition, f: &ConvexEnsemble, row: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..c.m() {
        let values: Vec<f64> = c.members[k]
            .iter()
            .map(|&j| f.terms()[j].stump.evaluate(row))
            .collect();
        let within = weighted_variance(&c.sub_weights[k], &values);
        total += c.alphas[k] * c.alphas[k] * within;
    }
    total
}

/// Per-row cluster variances over a dataset.
pub fn cluster_variance_on(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    data: &Dataset,
) -> Result<Vec<f64>> {
    require_conv(f, "cluster_variance")?;
    c.validate_against(f)?;
    f.check_row_width(data.p())?;
    Ok(exec::map_collect(data.n(), |i| cluster_variance_raw(c, f, data.row(i))))
}

/// Fraction of entries with `σ² ≥ γ` (closed inequality).
pub fn variance_tail(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("variance_tail needs at least one value"));
    }
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("variance values must be nonnegative"));
    }
    let count = values.iter().filter(|&&v| v >= gamma).count();
    Ok(count as f64 / values.len() as f64)
}

/// Result of [`search_clusters`].
#[derive(Debug, Clone, Serialize)]
pub struct ClusterSearch {
    pub decomposition: ClusterDecomposition,
    /// Sample average of σ²(c; ·).
    pub objective: f64,
    pub requested_m: usize,
    pub effective_m: usize,
    /// True when fewer distinct output profiles than requested clusters
    /// forced a reduction to singleton-profile clusters.
    pub reduced: bool,
}

const KMEANS_RESTARTS: u64 = 8;
const KMEANS_MAX_ITERS: usize = 100;

/// Searches the hard partitions of the ensemble's terms for a decomposition
/// with small average cluster variance: each stump is represented by its
/// output profile on the sample and clustered by seeded weighted k-means
/// (weights λ, squared Euclidean distance, k-means++ initialization, best of
/// 8 restarts). Decompositions in general may also split mass softly
/// across clusters; this search covers the hard-partition subfamily, so the
/// objective is an upper estimate.
pub fn search_clusters(
    f: &ConvexEnsemble,
    data: &Dataset,
    m: usize,
    seed: u64,
) -> Result<ClusterSearch> {
    require_conv(f, "search_clusters")?;
    f.check_row_width(data.p())?;
    let t = f.len();
    if m == 0 || m > t {
        return Err(invalid(format!("cluster count m = {m} must lie in 1..={t}")));
    }
    let profiles: Vec<Vec<f64>> =
        exec::map_collect(t, |j| f.terms()[j].stump.profile(data));

    // Distinct profiles bound the useful cluster count.
    let mut keys: Vec<(Vec<u64>, usize)> = profiles
        .iter()
        .enumerate()
        .map(|(j, p)| (p.iter().map(|v| v.to_bits()).collect(), j))
        .collect();
    keys.sort();
    let mut distinct = 0usize;
    let mut profile_group = vec![0usize; t];
    {
        let mut prev: Option<&Vec<u64>> = None;
        for (key, j) in &keys {
            if prev != Some(key) {
                distinct += 1;
                prev = Some(key);
            }
            profile_group[*j] = distinct - 1;
        }
    }

    if m > distinct {
        let decomposition = partition_decomposition(f, &profile_group)?;
        let objective = average_cluster_variance(&decomposition, f, data)?;
        return Ok(ClusterSearch {
            decomposition,
            objective,
            requested_m: m,
            effective_m: distinct,
            reduced: true,
        });
    }

    let weights: Vec<f64> = f.weights().collect();
    let restarts = exec::map_collect(KMEANS_RESTARTS as usize, |r| {
        let mut rng = rng::stream(seed, r as u64);
        weighted_kmeans(&profiles, &weights, m, &mut rng)
    });
    let mut best: Option<(f64, ClusterDecomposition)> = None;
    for assignment in restarts {
        let decomposition = partition_decomposition(f, &assignment)?;
        let objective = average_cluster_variance(&decomposition, f, data)?;
        let replace = match &best {
            None => true,
            Some((bo, _)) => objective < *bo,
        };
        if replace {
            best = Some((objective, decomposition));
        }
    }
    let (objective, decomposition) = best.expect("at least one restart");
    Ok(ClusterSearch {
        decomposition,
        objective,
        requested_m: m,
        effective_m: m,
        reduced: false,
    })
}

fn average_cluster_variance(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    data: &Dataset,
) -> Result<f64> {
    let values = cluster_variance_on(c, f, data)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// One seeded weighted k-means run; returns the hard assignment.
fn weighted_kmeans(
    profiles: &[Vec<f64>],
    weights: &[f64],
    m: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let t = profiles.len();
    let dim = profiles[0].len();

    // k-means++-style init with weight-scaled distances.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(m);
    let first = WeightedIndex::new(weights.iter().map(|w| w.max(f64::MIN_POSITIVE)))
        .expect("positive weights")
        .sample(rng);
    centers.push(profiles[first].clone());
    while centers.len() < m {
        let scores: Vec<f64> = (0..t)
            .map(|j| {
                let d2 = centers
                    .iter()
                    .map(|c| squared_distance(&profiles[j], c))
                    .fold(f64::INFINITY, f64::min);
                weights[j] * d2
            })
            .collect();
        let total: f64 = scores.iter().sum();
        let pick = if total > 0.0 {
            WeightedIndex::new(&scores).expect("nonnegative scores").sample(rng)
        } else {
            // All points coincide with centers; any not-yet-used index keeps
            // clusters nonempty and the run deterministic.
            (0..t)
                .find(|j| !centers.iter().any(|c| c == &profiles[*j]))
                .unwrap_or(centers.len() % t)
        };
        centers.push(profiles[pick].clone());
    }

    let mut assignment = vec![0usize; t];
    for _ in 0..KMEANS_MAX_ITERS {
        // Assign (ties to the lowest center index).
        let mut next = vec![0usize; t];
        for j in 0..t {
            let mut best_k = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = squared_distance(&profiles[j], c);
                if d < best_d {
                    best_d = d;
                    best_k = k;
                }
            }
            next[j] = best_k;
        }
        // Refill empty clusters with the worst-fitting point of the crowded
        // ones (deterministic: highest weighted distance, lowest index).
        loop {
            let mut counts = vec![0usize; m];
            for &k in &next {
                counts[k] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let candidate = (0..t)
                .filter(|&j| counts[next[j]] > 1)
                .max_by(|&a, &b| {
                    let da = weights[a] * squared_distance(&profiles[a], &centers[next[a]]);
                    let db = weights[b] * squared_distance(&profiles[b], &centers[next[b]]);
                    da.total_cmp(&db).then_with(|| b.cmp(&a))
                })
                .expect("t >= m guarantees a donor");
            next[candidate] = empty;
        }
        let converged = next == assignment;
        assignment = next;

        // Update centers to weighted means.
        for (k, center) in centers.iter_mut().enumerate() {
            let mut mass = 0.0;
            let mut mean = vec![0.0; dim];
            for j in 0..t {
                if assignment[j] == k {
                    mass += weights[j];
                    for (m_i, p_i) in mean.iter_mut().zip(&profiles[j]) {
                        *m_i += weights[j] * p_i;
                    }
                }
            }
            if mass > 0.0 {
                for m_i in mean.iter_mut() {
                    *m_i /= mass;
                }
                *center = mean;
            }
        }
        if converged {
            break;
        }
    }
    assignment
}

/// Result of [`cluster_count`]: the smallest m whose searched decomposition
/// satisfies the cluster-count inequality, or `m_max + 1` flagged not-found.
/// Because the search is heuristic over hard partitions, this is an upper
/// estimate of the true count (report it as m̂⁺).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClusterCountResult {
    pub m: usize,
    pub found: bool,
}

/// Number of (γ, δ)-clusters: the smallest m ≤ m_max with
/// `P_n(σ²(c; x) ≥ γ) ≤ V m γ/(nδ²) · log²(n/δ)` for the searched c.
pub fn cluster_count(
    f: &ConvexEnsemble,
    data: &Dataset,
    params: &BoundParams,
    gamma: f64,
    delta: f64,
    seed: u64,
) -> Result<ClusterCountResult> {
    if !(delta > 0.0 && delta <= gamma && gamma <= 1.0) {
        return Err(invalid(format!(
            "need 0 < delta <= gamma <= 1, got delta = {delta}, gamma = {gamma}"
        )));
    }
    let n = params.n_f64();
    let log_nd = params.log_n_over(delta);
    let m_cap = params.m_max.min(f.len());
    for m in 1..=m_cap {
        let sigma2 = if m == 1 {
            pointwise_variance_on(f, data)?
        } else {
            let search = search_clusters(f, data, m, rng::subseed(seed, m as u64))?;
            cluster_variance_on(&search.decomposition, f, data)?
        };
        let tail = variance_tail(&sigma2, gamma)?;
        let threshold = params.v * m as f64 * gamma / (n * delta * delta) * log_nd * log_nd;
        if tail <= threshold {
            return Ok(ClusterCountResult { m, found: true });
        }
    }
    Ok(ClusterCountResult { m: params.m_max + 1, found: false })
}

/// Dyadic γ candidates `{2^{-j} : 2^{-j} ≥ δ} ∪ {1}` for the (δ, γ) grids.
fn gamma_grid(delta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut g = 1.0;
    while g >= delta {
        out.push(g);
        g /= 2.0;
    }
    out
}

struct VarianceGridBest {
    total: f64,
    delta: f64,
    gamma: f64,
    margin: f64,
    complexity: f64,
}

/// Shared (δ, γ) grid scan of
/// `K(P_n(yf ≤ δ) + P_n(σ² ≥ γ) + V·mult·γ/(nδ²) log²(n/δ) + t/n)`.
/// `mult` is 1 for the global-variance bound and m for the cluster bound.
fn variance_grid_scan(
    sigma2: &[f64],
    profile: &MarginProfile,
    params: &BoundParams,
    mult: f64,
    curve: Option<&mut Vec<(f64, f64)>>,
) -> Result<VarianceGridBest> {
    let n = params.n_f64();
    let k = params.k;
    let mut best: Option<VarianceGridBest> = None;
    let mut curve_points = Vec::new();
    for &delta in &params.delta_grid {
        let p_n = profile.cdf(delta);
        let log_nd = params.log_n_over(delta);
        let mut delta_best: Option<(f64, f64, f64)> = None; // total, gamma, complexity-part
        for gamma in gamma_grid(delta) {
            let tail = variance_tail(sigma2, gamma)?;
            let complexity = tail + params.v * mult * gamma / (n * delta * delta) * log_nd * log_nd;
            let total = k * (p_n + complexity + params.t / n);
            let replace = match delta_best {
                None => true,
                Some((bt, bg, _)) => total < bt || (total == bt && gamma < bg),
            };
            if replace {
                delta_best = Some((total, gamma, complexity));
            }
        }
        let (total, gamma, complexity) = delta_best.expect("gamma grid nonempty");
        curve_points.push((delta, total));
        let replace = match &best {
            None => true,
            Some(b) => total < b.total || (total == b.total && delta < b.delta),
        };
        if replace {
            best = Some(VarianceGridBest {
                total,
                delta,
                gamma,
                margin: k * p_n,
                complexity: k * complexity,
            });
        }
    }
    if let Some(c) = curve {
        *c = curve_points;
    }
    Ok(best.expect("nonempty delta grid"))
}

/// Cluster-bound total at a fixed (m, δ, γ) from precomputed σ² values:
/// `K(P_n(yf ≤ δ) + P_n(σ² ≥ γ) + V m γ/(nδ²) log²(n/δ) + t/n)`.
/// `m = 1` with pointwise variances is the global-variance bound's value.
pub fn cluster_total_at(
    sigma2: &[f64],
    profile: &MarginProfile,
    params: &BoundParams,
    m: usize,
    delta: f64,
    gamma: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= gamma && gamma <= 1.0) {
        return Err(invalid(format!(
            "need 0 < delta <= gamma <= 1, got delta = {delta}, gamma = {gamma}"
        )));
    }
    let n = params.n_f64();
    let log_nd = params.log_n_over(delta);
    let tail = variance_tail(sigma2, gamma)?;
    Ok(params.k
        * (profile.cdf(delta)
            + tail
            + params.v * m as f64 * gamma / (n * delta * delta) * log_nd * log_nd
            + params.t / n))
}

/// Global-variance bound with its three closed-form optimizers: the (δ, γ) grid
/// infimum, the closed-form γ̂ plug-in (p = 1), the general-p plug-in, and
/// the p → ∞ form in terms of the maximal pointwise variance. Reports the
/// best and all branch totals.
pub fn bound_variance(
    f: &ConvexEnsemble,
    data: &Dataset,
    profile: &MarginProfile,
    params: &BoundParams,
) -> Result<BoundReport> {
    let sigma2 = pointwise_variance_on(f, data)?;
    let n = params.n_f64();
    let k = params.k;
    let n_rows = sigma2.len() as f64;
    let mean_s2: f64 = sigma2.iter().sum::<f64>() / n_rows;
    let p = params.p_exponent;
    let mean_s2p: f64 = sigma2.iter().map(|s| s.powf(p)).sum::<f64>() / n_rows;
    let max_s2: f64 = sigma2.iter().copied().fold(0.0, f64::max);

    let mut report = BoundReport::new("pointwise_variance");
    let mut curve = Vec::new();
    let grid = variance_grid_scan(&sigma2, profile, params, 1.0, Some(&mut curve))?;
    report.curve = curve;
    report.extras.insert("total_grid".into(), grid.total);
    report.extras.insert("mean_sigma2".into(), mean_s2);
    report.extras.insert("max_sigma2".into(), max_s2);

    let mut best = (grid.total, grid.delta, Some(grid.gamma), grid.margin, grid.complexity, "grid");

    // The closed-form optimizers need positive variance moments.
    if mean_s2 > 0.0 {
        let mut branch: Option<(f64, f64, f64, f64, f64)> = None; // total, delta, gammahat, margin, complexity
        for &delta in &params.delta_grid {
            let log_nd = params.log_n_over(delta);
            let gamma_hat = (mean_s2.sqrt() * n.sqrt() * delta / (params.v.sqrt() * log_nd)).min(1.0);
            if delta > gamma_hat {
                continue;
            }
            let plugged = 2.0 * params.v.sqrt() * mean_s2.sqrt() / (n.sqrt() * delta) * log_nd;
            let whole_hull = params.v / (n * delta * delta) * log_nd * log_nd;
            let complexity = plugged.min(whole_hull);
            let total = k * (profile.cdf(delta) + complexity + params.t / n);
            let replace = match branch {
                None => true,
                Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
            };
            if replace {
                branch = Some((total, delta, gamma_hat, k * profile.cdf(delta), k * complexity));
            }
        }
        if let Some((total, delta, gamma_hat, margin, complexity)) = branch {
            report.extras.insert("total_p1".into(), total);
            report.extras.insert("gamma_hat_p1".into(), gamma_hat);
            if total < best.0 {
                best = (total, delta, Some(gamma_hat), margin, complexity, "p1");
            }
        }
    } else {
        report
            .notes
            .push("mean pointwise variance is zero; closed-form branches skipped".into());
    }

    if mean_s2p > 0.0 {
        let mut branch: Option<(f64, f64, f64, f64, f64)> = None;
        for &delta in &params.delta_grid {
            let log_nd = params.log_n_over(delta);
            let gamma_hat = (mean_s2p.powf(1.0 / (p + 1.0)) * n.powf(1.0 / (p + 1.0))
                * delta.powf(2.0 / (p + 1.0))
                / (params.v.powf(1.0 / (p + 1.0)) * log_nd.powf(2.0 / (p + 1.0))))
            .min(1.0);
            if delta > gamma_hat {
                continue;
            }
            let plugged = 2.0 * params.v.powf(p / (p + 1.0)) * mean_s2p.powf(1.0 / (p + 1.0))
                / (n.powf(p / (p + 1.0)) * delta.powf(2.0 * p / (p + 1.0)))
                * log_nd.powf(2.0 * p / (p + 1.0));
            let whole_hull = params.v / (n * delta * delta) * log_nd * log_nd;
            let complexity = plugged.min(whole_hull);
            let total = k * (profile.cdf(delta) + complexity + params.t / n);
            let replace = match branch {
                None => true,
                Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
            };
            if replace {
                branch = Some((total, delta, gamma_hat, k * profile.cdf(delta), k * complexity));
            }
        }
        if let Some((total, delta, gamma_hat, margin, complexity)) = branch {
            report.extras.insert("total_p".into(), total);
            if total < best.0 {
                best = (total, delta, Some(gamma_hat), margin, complexity, "general_p");
            }
        }
    }

    if max_s2 > 0.0 {
        let mut branch: Option<(f64, f64, f64, f64)> = None;
        for &delta in &params.delta_grid {
            if delta > max_s2 {
                continue;
            }
            let log_nd = params.log_n_over(delta);
            let complexity = params.v * max_s2 / (n * delta * delta) * log_nd * log_nd;
            let total = k * (profile.cdf(delta) + complexity + params.t / n);
            let replace = match branch {
                None => true,
                Some((bt, bd, ..)) => total < bt || (total == bt && delta < bd),
            };
            if replace {
                branch = Some((total, delta, k * profile.cdf(delta), k * complexity));
            }
        }
        if let Some((total, delta, margin, complexity)) = branch {
            report.extras.insert("total_pinf".into(), total);
            if total < best.0 {
                best = (total, delta, None, margin, complexity, "p_inf");
            }
        }
    }

    let (total, delta, gamma, margin, complexity, branch) = best;
    report.chosen_delta = delta;
    report.chosen_gamma = gamma;
    report.margin_term = margin;
    report.complexity_term = complexity;
    report.confidence_term = k * params.t / n;
    report.total = total;
    report.notes.push(format!("best branch: {branch}"));
    Ok(report)
}

/// Cluster bound: for each m up to the search cap, clusters the ensemble and
/// takes the (δ, γ) grid infimum of the m-cluster bound; the m = 1 case is
/// evaluated through the pointwise variance (the unique single-cluster
/// decomposition) and equals the global-variance grid branch exactly.
pub fn bound_cluster(
    f: &ConvexEnsemble,
    data: &Dataset,
    profile: &MarginProfile,
    params: &BoundParams,
    seed: u64,
) -> Result<BoundReport> {
    require_conv(f, "bound_cluster")?;
    let mut report = BoundReport::new("cluster_variance");
    let m_cap = params.m_max.min(f.len());
    let mut best: Option<(VarianceGridBest, usize)> = None;
    let mut best_curve: Vec<(f64, f64)> = Vec::new();
    for m in 1..=m_cap {
        let sigma2 = if m == 1 {
            pointwise_variance_on(f, data)?
        } else {
            let search = search_clusters(f, data, m, rng::subseed(seed, m as u64))?;
            if search.reduced {
                report.notes.push(format!(
                    "m = {m} exceeds distinct profiles ({}); skipped",
                    search.effective_m
                ));
                continue;
            }
            cluster_variance_on(&search.decomposition, f, data)?
        };
        let mut curve = Vec::new();
        let scan = variance_grid_scan(&sigma2, profile, params, m as f64, Some(&mut curve))?;
        report.extras.insert(format!("total_m{m}"), scan.total);
        let replace = match &best {
            None => true,
            Some((b, bm)) => scan.total < b.total || (scan.total == b.total && m < *bm),
        };
        if replace {
            best = Some((scan, m));
            best_curve = curve;
        }
    }
    let (scan, m) = best.expect("m = 1 is always evaluated");
    let n = params.n_f64();
    report.chosen_delta = scan.delta;
    report.chosen_gamma = Some(scan.gamma);
    report.chosen_m = Some(m);
    report.margin_term = scan.margin;
    report.complexity_term = scan.complexity;
    report.confidence_term = params.k * params.t / n;
    report.total = scan.total;
    report.curve = best_curve;
    // Headline γ = δ error-term shape at the chosen m and δ.
    let log_nd = params.log_n_over(scan.delta);
    report.extras.insert(
        "headline_gamma_eq_delta".into(),
        m as f64 / (n * scan.delta) * log_nd * log_nd,
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stump::Stump;

    fn stump(threshold: f64, polarity: i8) -> Stump {
        Stump::new(0, threshold, polarity).unwrap()
    }

    fn ensemble(pairs: Vec<(f64, Stump)>) -> ConvexEnsemble {
        ConvexEnsemble::from_pairs(Mode::Conv, pairs)
            .unwrap()
            .normalize()
            .unwrap()
    }

    fn grid_data(n: usize) -> Dataset {
        Dataset::from_rows(
            (0..n).map(|i| vec![i as f64]).collect(),
            (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn pointwise_variance_examples() {
        let single = ensemble(vec![(1.0, stump(0.5, 1))]);
        assert_eq!(pointwise_variance(&single, &[1.0]).unwrap(), 0.0);

        // Two stumps disagreeing at x: mean 0, both deviations 1.
        let split = ensemble(vec![(0.5, stump(0.5, 1)), (0.5, stump(0.5, -1))]);
        assert_eq!(pointwise_variance(&split, &[1.0]).unwrap(), 1.0);

        // Agreement despite different weights.
        let agree = ensemble(vec![(0.75, stump(0.5, 1)), (0.25, stump(0.2, 1))]);
        assert_eq!(pointwise_variance(&agree, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn partition_examples() {
        let f = ensemble(vec![
            (0.5, stump(0.5, 1)),
            (0.3, stump(1.5, 1)),
            (0.2, stump(2.5, 1)),
        ]);
        let all_one = partition_decomposition(&f, &[0, 0, 0]).unwrap();
        assert_eq!(all_one.alphas().len(), 1);
        assert!((all_one.alphas()[0] - 1.0).abs() < 1e-12);
        assert_eq!(all_one.sub_weights()[0].len(), 3);

        let two = partition_decomposition(&f, &[0, 1, 1]).unwrap();
        assert!((two.alphas()[0] - 0.5).abs() < 1e-12);
        assert!((two.alphas()[1] - 0.5).abs() < 1e-12);
        assert!((two.sub_weights()[1][0] - 0.6).abs() < 1e-12);
        assert!((two.sub_weights()[1][1] - 0.4).abs() < 1e-12);
        two.validate_against(&f).unwrap();

        assert!(partition_decomposition(&f, &[0, 2, 2]).is_err()); // empty cluster 1
        assert!(partition_decomposition(&f, &[0, 0]).is_err()); // wrong length
    }

    #[test]
    fn cluster_variance_examples() {
        let f = ensemble(vec![
            (0.5, stump(0.5, 1)),
            (0.3, stump(1.5, 1)),
            (0.2, stump(2.5, 1)),
        ]);
        let x = [1.0];
        let single = partition_decomposition(&f, &[0, 0, 0]).unwrap();
        let pv = pointwise_variance(&f, &x).unwrap();
        let cv = cluster_variance(&single, &f, &x).unwrap();
        assert!((pv - cv).abs() < 1e-12);

        // Singletons: every within-cluster variance vanishes.
        let singletons = partition_decomposition(&f, &[0, 1, 2]).unwrap();
        assert_eq!(cluster_variance(&singletons, &f, &x).unwrap(), 0.0);
    }

    #[test]
    fn cluster_variance_direct_formula() {
        // α = (0.5, 0.5); within-cluster variances 1 and 1/4 at x = 1:
        // cluster 1 splits ±1 evenly; cluster 2 mixes p = (2+√3)/4 of +1.
        let p = (2.0 + 3f64.sqrt()) / 4.0;
        let f = ensemble(vec![
            (0.25, stump(0.5, 1)),
            (0.25, stump(0.5, -1)),
            (0.5 * p, stump(0.7, 1)),
            (0.5 * (1.0 - p), stump(0.7, -1)),
        ]);
        // terms get sorted by weight: find indices by threshold/polarity
        let idx = |th: f64, pol: i8| {
            f.terms()
                .iter()
                .position(|t| t.stump.threshold == th && t.stump.polarity == pol)
                .unwrap()
        };
        let mut assignment = vec![0usize; 4];
        assignment[idx(0.5, 1)] = 0;
        assignment[idx(0.5, -1)] = 0;
        assignment[idx(0.7, 1)] = 1;
        assignment[idx(0.7, -1)] = 1;
        let c = partition_decomposition(&f, &assignment).unwrap();
        let value = cluster_variance(&c, &f, &[1.0]).unwrap();
        assert!((value - 0.3125).abs() < 1e-12, "got {value}");
    }

    #[test]
    fn law_of_total_variance_and_domination() {
        use rand::Rng;
        for trial in 0..20 {
            let mut rng = rng::stream(300 + trial, 0);
            let t = rng.gen_range(2..8);
            let pairs: Vec<(f64, Stump)> = (0..t)
                .map(|j| {
                    (
                        rng.gen_range(0.05..1.0),
                        stump(j as f64 * 0.8 + rng.gen_range(-0.2..0.2), if rng.gen_bool(0.5) { 1 } else { -1 }),
                    )
                })
                .collect();
            let f = ensemble(pairs);
            let m = rng.gen_range(1..=f.len());
            let assignment: Vec<usize> = {
                // surjective random assignment
                let mut a: Vec<usize> = (0..f.len()).map(|j| j % m).collect();
                for j in 0..a.len() {
                    let swap = rng.gen_range(0..a.len());
                    a.swap(j, swap);
                }
                a
            };
            let c = partition_decomposition(&f, &assignment).unwrap();
            let data = grid_data(6);
            for i in 0..data.n() {
                let x = data.row(i);
                let total = pointwise_variance(&f, x).unwrap();
                // law of total variance
                let mut within = 0.0;
                let mut between = 0.0;
                let fx = f.evaluate(x).unwrap();
                for k in 0..c.m() {
                    let values: Vec<f64> = c.members()[k]
                        .iter()
                        .map(|&j| f.terms()[j].stump.evaluate(x))
                        .collect();
                    let mean_k: f64 = c.sub_weights()[k]
                        .iter()
                        .zip(&values)
                        .map(|(w, v)| w * v)
                        .sum();
                    let var_k: f64 = c.sub_weights()[k]
                        .iter()
                        .zip(&values)
                        .map(|(w, v)| w * (v - mean_k) * (v - mean_k))
                        .sum();
                    within += c.alphas()[k] * var_k;
                    between += c.alphas()[k] * (mean_k - fx) * (mean_k - fx);
                }
                assert!((total - (within + between)).abs() < 1e-12);
                // domination
                let cv = cluster_variance(&c, &f, x).unwrap();
                assert!(cv <= total + 1e-12);
                assert!((0.0..=1.0 + 1e-12).contains(&total));
            }
        }
    }

    #[test]
    fn variance_tail_examples() {
        assert_eq!(variance_tail(&[0.0, 0.0], 0.1).unwrap(), 0.0);
        assert_eq!(variance_tail(&[0.0, 0.5], 0.0).unwrap(), 1.0);
        assert_eq!(variance_tail(&[0.2, 0.05, 0.3, 0.1], 0.15).unwrap(), 0.5);
        assert!(variance_tail(&[-0.1], 0.0).is_err());
        assert!(variance_tail(&[], 0.0).is_err());
    }

    /// Two groups of same-profile stumps with complementary polarities:
    /// f ≡ 0, σ²_λ ≡ 1, and the 2-partition has zero cluster variance.
    fn duplicate_group_fixture(n: usize) -> (ConvexEnsemble, Dataset) {
        let mid = n as f64 / 2.0;
        let f = ensemble(vec![
            (1.0, stump(mid - 0.75, 1)),
            (1.0, stump(mid - 0.5, 1)),
            (1.0, stump(mid - 0.25, 1)),
            (1.0, stump(mid - 0.75, -1)),
            (1.0, stump(mid - 0.5, -1)),
            (1.0, stump(mid - 0.25, -1)),
        ]);
        (f, grid_data(n))
    }

    #[test]
    fn search_recovers_duplicate_groups() {
        let (f, data) = duplicate_group_fixture(64);
        let search = search_clusters(&f, &data, 2, 17).unwrap();
        assert_eq!(search.effective_m, 2);
        assert!(!search.reduced);
        assert!(search.objective.abs() < 1e-15, "objective {}", search.objective);
        // Each cluster holds one polarity group.
        for member in search.decomposition.members() {
            let polarities: Vec<i8> =
                member.iter().map(|&j| f.terms()[j].stump.polarity).collect();
            assert!(polarities.windows(2).all(|w| w[0] == w[1]));
        }

        // Determinism.
        let again = search_clusters(&f, &data, 2, 17).unwrap();
        assert_eq!(search.decomposition, again.decomposition);

        // m = T: singletons, objective 0.
        let t = f.len();
        let full = search_clusters(&f, &data, t, 3).unwrap();
        assert!(full.objective.abs() < 1e-15);

        // m beyond distinct profiles: reduced and flagged.
        let over = search_clusters(&f, &data, 3, 3).unwrap();
        assert!(over.reduced);
        assert_eq!(over.effective_m, 2);
    }

    #[test]
    fn cluster_count_on_fixture() {
        let (f, data) = duplicate_group_fixture(2000);
        let params = BoundParams::new(2.0, data.n()).unwrap();
        // m = 1: P_n(σ² ≥ 0.5) = 1 but threshold ≈ 0.138 — fails;
        // m = 2: zero variance everywhere — passes.
        let result = cluster_count(&f, &data, &params, 0.5, 0.5, 11).unwrap();
        assert!(result.found);
        assert_eq!(result.m, 2);

        // Identical stumps merge to one atom: σ² ≡ 0, m = 1 passes.
        let atom = ensemble(vec![(0.5, stump(3.0, 1)), (0.5, stump(3.0, 1))]);
        let small = grid_data(64);
        let one = cluster_count(&atom, &small, &BoundParams::new(2.0, 64).unwrap(), 0.25, 0.25, 5)
            .unwrap();
        assert_eq!(one.m, 1);

        assert!(cluster_count(&f, &data, &params, 0.1, 0.5, 1).is_err()); // δ > γ
    }

    #[test]
    fn cluster_count_exhaustion_flagged() {
        let (f, data) = duplicate_group_fixture(2000);
        let params = BoundParams::new(2.0, data.n())
            .unwrap()
            .with_m_max(1)
            .unwrap();
        let result = cluster_count(&f, &data, &params, 0.5, 0.5, 11).unwrap();
        assert!(!result.found);
        assert_eq!(result.m, 2); // m_max + 1 sentinel
    }

    #[test]
    fn variance_bound_branches() {
        // Degenerate variance: closed-form branches skipped, grid total finite.
        let atom = ensemble(vec![(1.0, stump(0.5, 1))]);
        let data = grid_data(32);
        let profile = MarginProfile::from_ensemble(&atom, &data).unwrap();
        let params = BoundParams::new(2.0, data.n()).unwrap();
        let report = bound_variance(&atom, &data, &profile, &params).unwrap();
        assert!(report.total.is_finite());
        assert!(report.extras.contains_key("total_grid"));
        assert!(!report.extras.contains_key("total_p1"));

        // γ̂ plug-in value.
        let mean_s2: f64 = 0.04;
        let n = 10_000f64;
        let delta = 0.1;
        let gamma_hat = mean_s2.sqrt() * n.sqrt() * delta / (2f64.sqrt() * (n / delta).ln());
        assert!((gamma_hat - 0.122_837_029_274_275_08).abs() < 1e-12);

        // p → ∞ complexity term: V max σ²/(nδ²) log²(n/δ) at max σ² = 1/4.
        let pinf = 2.0 * 0.25 / (n * delta * delta) * (n / delta).ln().powi(2);
        assert!((pinf - 0.662_737_263_809_799_8).abs() < 1e-12);
    }

    #[test]
    fn cluster_m1_equals_variance_grid() {
        let (f, data) = duplicate_group_fixture(128);
        let profile = MarginProfile::from_ensemble(&f, &data).unwrap();
        let params = BoundParams::new(2.0, data.n()).unwrap().with_m_max(4).unwrap();
        let t3 = bound_variance(&f, &data, &profile, &params).unwrap();
        let t4 = bound_cluster(&f, &data, &profile, &params, 9).unwrap();
        assert_eq!(t4.extras["total_m1"], t3.extras["total_grid"]);
        assert!(t4.extras["total_m2"] <= t4.extras["total_m1"]);
    }

    #[test]
    fn two_groups_beat_one_cluster_at_fixed_point() {
        // n large enough that Vγ/(nδ²) log²(n/δ) < 1/2 at (δ, γ) = (1/2, 1/2):
        // the 1-cluster total pays the full variance tail, the 2-cluster
        // total trades it for one extra complexity term and wins strictly.
        let (f, data) = duplicate_group_fixture(512);
        let profile = MarginProfile::from_ensemble(&f, &data).unwrap();
        let params = BoundParams::new(2.0, data.n()).unwrap();
        let (delta, gamma) = (0.5, 0.5);
        let c_term = params.v * gamma / (data.n() as f64 * delta * delta)
            * params.log_n_over(delta).powi(2);
        assert!(c_term < 0.5, "fixture needs the complexity term below 1/2, got {c_term}");

        let sigma1 = pointwise_variance_on(&f, &data).unwrap();
        assert_eq!(variance_tail(&sigma1, gamma).unwrap(), 1.0);
        let search = search_clusters(&f, &data, 2, 9).unwrap();
        let sigma2 = cluster_variance_on(&search.decomposition, &f, &data).unwrap();

        let one = cluster_total_at(&sigma1, &profile, &params, 1, delta, gamma).unwrap();
        let two = cluster_total_at(&sigma2, &profile, &params, 2, delta, gamma).unwrap();
        assert!(two < one, "m=2 total {two} should beat m=1 total {one}");
        assert!(cluster_total_at(&sigma1, &profile, &params, 1, 0.5, 0.25).is_err());
    }
}
