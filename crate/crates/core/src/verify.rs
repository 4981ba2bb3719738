//! Randomized approximation constructions behind the sparsity and cluster
//! bounds — Maurey head+tail sampling, independent per-cluster sampling, and
//! the paired-difference variance estimator — with Monte Carlo checks of
//! their quantitative steps (Hoeffding and Bernstein tail ceilings,
//! unbiasedness, variance identities).
//!
//! All checks are seeded; replicate r draws from ChaCha stream r of the
//! master seed, so parallel and serial runs produce identical reports.

use rand::distributions::{Distribution, WeightedIndex};
use serde::Serialize;

use crate::clusters::{cluster_variance_on, ClusterDecomposition};
use crate::data::Dataset;
use crate::ensemble::{ConvexEnsemble, Mode};
use crate::error::{invalid, Result};
use crate::exec;
use crate::rng;

/// Stream-index bases keeping the Monte Carlo stages independent.
const STREAM_ESTIMATOR: u64 = 1 << 32;
const STREAM_KSCAN: u64 = 1 << 33;

fn require_conv(f: &ConvexEnsemble, op: &str) -> Result<()> {
    f.require_normalized(op)?;
    if f.mode() != Mode::Conv {
        return Err(invalid(format!("{op} requires a conv-mode ensemble")));
    }
    Ok(())
}

/// Agresti–Coull (Wilson-style) standard error of a binomial frequency;
/// strictly positive even at zero counts so near-zero gates keep slack.
fn binomial_se(count: u64, draws: usize) -> f64 {
    let m = draws as f64;
    let p = (count as f64 + 2.0) / (m + 4.0);
    (p * (1.0 - p) / (m + 4.0)).sqrt()
}

/// Head-plus-tail randomization of a convex combination: the `d` largest
/// terms kept exactly, `N` i.i.d. draws from the normalized tail measure.
/// The realized `g(x) = head(x) + γ_d/N · Σ ξ_k(x)` is unbiased for f(x).
#[derive(Debug, Clone)]
pub struct MaureySample {
    f: ConvexEnsemble,
    pub d: usize,
    pub gamma_d: f64,
    /// Indices into the ensemble's terms, one per replicate draw.
    pub draws: Vec<usize>,
    /// True when the tail carries no mass and the sample is just the head.
    pub head_only: bool,
}

impl MaureySample {
    pub fn evaluate(&self, row: &[f64]) -> Result<f64> {
        self.f.check_row_width(row.len())?;
        Ok(self.eval_raw(row))
    }

    fn eval_raw(&self, row: &[f64]) -> f64 {
        let head: f64 = self.f.terms()[..self.d.min(self.f.len())]
            .iter()
            .map(|t| t.weight * t.stump.evaluate(row))
            .sum();
        if self.head_only || self.draws.is_empty() {
            return head;
        }
        let dot: f64 = self
            .draws
            .iter()
            .map(|&j| self.f.terms()[j].stump.evaluate(row))
            .sum();
        head + self.gamma_d * (dot / self.draws.len() as f64)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }
}

/// Draws a Maurey sample of f: `n_draws` seeded categorical draws from the
/// tail measure `λ_k/γ_d` over the terms beyond the d largest.
pub fn maurey_sample(
    f: &ConvexEnsemble,
    d: usize,
    n_draws: usize,
    seed: u64,
) -> Result<MaureySample> {
    require_conv(f, "maurey_sample")?;
    if d > f.len() {
        return Err(invalid(format!("head size {d} exceeds term count {}", f.len())));
    }
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let gamma_d = f.tail_weight(d)?;
    if gamma_d == 0.0 {
        return Ok(MaureySample { f: f.clone(), d, gamma_d, draws: Vec::new(), head_only: true });
    }
    let tail_weights: Vec<f64> = f.terms()[d..].iter().map(|t| t.weight).collect();
    let dist = WeightedIndex::new(&tail_weights)
        .map_err(|e| invalid(format!("tail weights are not sampleable: {e}")))?;
    let mut rng = rng::master(seed);
    let draws = (0..n_draws).map(|_| d + dist.sample(&mut rng)).collect();
    Ok(MaureySample { f: f.clone(), d, gamma_d, draws, head_only: false })
}

/// Per-row outcome of the Maurey tail check.
#[derive(Debug, Clone, Serialize)]
pub struct MaureyRowStat {
    pub f_value: f64,
    pub mean_g: f64,
    pub se_g: f64,
    pub freq_two_sided: f64,
    pub freq_one_sided: f64,
}

/// Monte Carlo check of the Hoeffding step in the sparsity randomization.
#[derive(Debug, Clone, Serialize)]
pub struct MaureyTailReport {
    pub d: usize,
    pub gamma_d: f64,
    pub delta: f64,
    /// Replicate size `N = ⌈2 (γ_d²/δ²) log n⌉`.
    pub n_draws: usize,
    /// Monte Carlo replicates.
    pub draws: usize,
    /// Hoeffding ceiling `exp(−N δ²/(2 γ_d²))`.
    pub ceiling: f64,
    /// The targeted absorption level 1/n implied by the choice of N.
    pub target_one_over_n: f64,
    pub max_freq_two_sided: f64,
    pub max_freq_one_sided: f64,
    pub rows_checked: usize,
    pub pass: bool,
    pub per_row: Vec<MaureyRowStat>,
}

/// Estimates, per sample row, the exceedance frequency
/// `P_ξ(|y g(x) − y f(x)| ≥ δ)` over `draws` independent Maurey samples at
/// `N = ⌈2 (γ_d²/δ²) log n⌉`, against the Hoeffding ceiling. PASS means the
/// two-sided frequency stays within the ceiling plus 3 binomial standard
/// errors at every row.
pub fn check_maurey_tail(
    f: &ConvexEnsemble,
    data: &Dataset,
    delta: f64,
    d: usize,
    draws: usize,
    seed: u64,
) -> Result<MaureyTailReport> {
    require_conv(f, "check_maurey_tail")?;
    f.check_row_width(data.p())?;
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    if d > f.len() {
        return Err(invalid(format!("head size {d} exceeds term count {}", f.len())));
    }
    if draws == 0 {
        return Err(invalid("draws must be at least 1"));
    }
    let n = data.n();
    let gamma_d = f.tail_weight(d)?;
    let f_vals: Vec<f64> = exec::map_collect(n, |i| f.eval_raw(data.row(i)));

    if gamma_d == 0.0 {
        // Empty tail: g ≡ f and the exceedance vanishes identically.
        let per_row = f_vals
            .iter()
            .map(|&fv| MaureyRowStat {
                f_value: fv,
                mean_g: fv,
                se_g: 0.0,
                freq_two_sided: 0.0,
                freq_one_sided: 0.0,
            })
            .collect();
        return Ok(MaureyTailReport {
            d,
            gamma_d,
            delta,
            n_draws: 0,
            draws,
            ceiling: 0.0,
            target_one_over_n: 1.0 / n as f64,
            max_freq_two_sided: 0.0,
            max_freq_one_sided: 0.0,
            rows_checked: n,
            pass: true,
            per_row,
        });
    }

    let n_draws = (2.0 * gamma_d * gamma_d / (delta * delta) * (n as f64).ln()).ceil() as usize;
    let n_draws = n_draws.max(1);
    let tail_weights: Vec<f64> = f.terms()[d..].iter().map(|t| t.weight).collect();
    let tail_count = tail_weights.len();
    // Per-row values of each tail stump.
    let tail_vals: Vec<Vec<f64>> =
        exec::map_collect(tail_count, |j| f.terms()[d + j].stump.profile(data));
    let head_vals: Vec<f64> = exec::map_collect(n, |i| {
        f.terms()[..d]
            .iter()
            .map(|t| t.weight * t.stump.evaluate(data.row(i)))
            .sum()
    });

    #[derive(Clone)]
    struct Acc {
        two_sided: Vec<u64>,
        one_sided: Vec<u64>,
        g_sum: Vec<f64>,
        g_sumsq: Vec<f64>,
    }
    let zero = Acc {
        two_sided: vec![0; n],
        one_sided: vec![0; n],
        g_sum: vec![0.0; n],
        g_sumsq: vec![0.0; n],
    };
    let acc = exec::block_fold(
        draws,
        exec::REPLICATE_BLOCK,
        |range| {
            let mut acc = zero.clone();
            let dist = WeightedIndex::new(&tail_weights).expect("positive tail weights");
            let mut counts = vec![0u64; tail_count];
            for replicate in range {
                let mut rng = rng::stream(seed, replicate as u64);
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n_draws {
                    counts[dist.sample(&mut rng)] += 1;
                }
                for i in 0..n {
                    let mut dot = 0.0;
                    for (j, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            dot += c as f64 * tail_vals[j][i];
                        }
                    }
                    let g = head_vals[i] + gamma_d * (dot / n_draws as f64);
                    let dev = data.label(i) * (g - f_vals[i]);
                    if dev.abs() >= delta {
                        acc.two_sided[i] += 1;
                    }
                    if dev >= delta {
                        acc.one_sided[i] += 1;
                    }
                    acc.g_sum[i] += g;
                    acc.g_sumsq[i] += g * g;
                }
            }
            acc
        },
        |mut total, part| {
            for i in 0..n {
                total.two_sided[i] += part.two_sided[i];
                total.one_sided[i] += part.one_sided[i];
                total.g_sum[i] += part.g_sum[i];
                total.g_sumsq[i] += part.g_sumsq[i];
            }
            total
        },
        zero.clone(),
    );

    let m = draws as f64;
    let ceiling = (-(n_draws as f64) * delta * delta / (2.0 * gamma_d * gamma_d)).exp();
    let mut per_row = Vec::with_capacity(n);
    let mut pass = true;
    let mut max_two: f64 = 0.0;
    let mut max_one: f64 = 0.0;
    for i in 0..n {
        let freq_two = acc.two_sided[i] as f64 / m;
        let freq_one = acc.one_sided[i] as f64 / m;
        let mean_g = acc.g_sum[i] / m;
        let var_g = ((acc.g_sumsq[i] - m * mean_g * mean_g) / (m - 1.0).max(1.0)).max(0.0);
        let se_g = (var_g / m).sqrt();
        if freq_two > ceiling + 3.0 * binomial_se(acc.two_sided[i], draws) {
            pass = false;
        }
        max_two = max_two.max(freq_two);
        max_one = max_one.max(freq_one);
        per_row.push(MaureyRowStat {
            f_value: f_vals[i],
            mean_g,
            se_g,
            freq_two_sided: freq_two,
            freq_one_sided: freq_one,
        });
    }

    Ok(MaureyTailReport {
        d,
        gamma_d,
        delta,
        n_draws,
        draws,
        ceiling,
        target_one_over_n: 1.0 / n as f64,
        max_freq_two_sided: max_two,
        max_freq_one_sided: max_one,
        rows_checked: n,
        pass,
        per_row,
    })
}

/// Independent per-cluster randomization: replicate k draws one hypothesis
/// per cluster and forms `g_k(x) = Σ_j α_j ξ_k^j(x)`; `g` averages the
/// replicates. `Var_ξ(g_k(x))` equals the cluster variance σ²(c; x).
#[derive(Debug, Clone)]
pub struct ClusterSample {
    f: ConvexEnsemble,
    c: ClusterDecomposition,
    /// `draws[k][j]` is the term index drawn for cluster j in replicate k.
    pub draws: Vec<Vec<usize>>,
}

impl ClusterSample {
    /// One replicate's `g_k(x)`.
    pub fn evaluate_replicate(&self, k: usize, row: &[f64]) -> Result<f64> {
        self.f.check_row_width(row.len())?;
        Ok(self.eval_replicate_raw(k, row))
    }

    fn eval_replicate_raw(&self, k: usize, row: &[f64]) -> f64 {
        self.c
            .alphas()
            .iter()
            .zip(&self.draws[k])
            .map(|(&alpha, &term)| alpha * self.f.terms()[term].stump.evaluate(row))
            .sum()
    }

    /// The averaged approximation `g(x) = N^{-1} Σ_k g_k(x)`.
    pub fn evaluate(&self, row: &[f64]) -> Result<f64> {
        self.f.check_row_width(row.len())?;
        let total: f64 = (0..self.draws.len())
            .map(|k| self.eval_replicate_raw(k, row))
            .sum();
        Ok(total / self.draws.len() as f64)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }
}

/// Draws `n_draws` independent per-cluster replicates.
pub fn cluster_sample(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    n_draws: usize,
    seed: u64,
) -> Result<ClusterSample> {
    require_conv(f, "cluster_sample")?;
    c.validate_against(f)?;
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let dists = cluster_samplers(c)?;
    let mut rng = rng::master(seed);
    let draws = (0..n_draws)
        .map(|_| {
            dists
                .iter()
                .enumerate()
                .map(|(j, dist)| c.members()[j][dist.sample(&mut rng)])
                .collect()
        })
        .collect();
    Ok(ClusterSample { f: f.clone(), c: c.clone(), draws })
}

fn cluster_samplers(c: &ClusterDecomposition) -> Result<Vec<WeightedIndex<f64>>> {
    c.sub_weights()
        .iter()
        .map(|w| {
            WeightedIndex::new(w).map_err(|e| invalid(format!("cluster weights not sampleable: {e}")))
        })
        .collect()
}

/// Per-row outcome of the cluster-variance identity check.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterVarianceRow {
    pub analytic: f64,
    pub mc_variance: f64,
    pub se: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterVarianceReport {
    pub draws: usize,
    pub rows_checked: usize,
    pub fraction_within: f64,
    pub pass: bool,
    pub per_row: Vec<ClusterVarianceRow>,
}

/// Monte Carlo check that `Var_ξ(g_1(x))` equals the analytic cluster
/// variance: PASS iff the sample variance of g_1(x) over `draws` replicates
/// is within 3 variance-estimator standard errors of σ²(c; x) at 95% of
/// rows.
pub fn check_cluster_variance(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    data: &Dataset,
    draws: usize,
    seed: u64,
) -> Result<ClusterVarianceReport> {
    require_conv(f, "check_cluster_variance")?;
    c.validate_against(f)?;
    f.check_row_width(data.p())?;
    if draws < 100 {
        return Err(invalid("check_cluster_variance needs at least 100 draws"));
    }
    let n = data.n();
    let analytic = cluster_variance_on(c, f, data)?;
    // Per-(cluster, member) profile values.
    let member_vals: Vec<Vec<Vec<f64>>> = c
        .members()
        .iter()
        .map(|member| {
            member
                .iter()
                .map(|&j| f.terms()[j].stump.profile(data))
                .collect()
        })
        .collect();

    #[derive(Clone)]
    struct Moments {
        s1: Vec<f64>,
        s2: Vec<f64>,
        s3: Vec<f64>,
        s4: Vec<f64>,
    }
    let zero = Moments { s1: vec![0.0; n], s2: vec![0.0; n], s3: vec![0.0; n], s4: vec![0.0; n] };
    let acc = exec::block_fold(
        draws,
        exec::REPLICATE_BLOCK,
        |range| {
            let mut acc = zero.clone();
            let dists = cluster_samplers(c).expect("validated decomposition");
            for replicate in range {
                let mut rng = rng::stream(seed, replicate as u64);
                let picks: Vec<usize> = dists.iter().map(|d| d.sample(&mut rng)).collect();
                for i in 0..n {
                    let g1: f64 = c
                        .alphas()
                        .iter()
                        .enumerate()
                        .map(|(j, &alpha)| alpha * member_vals[j][picks[j]][i])
                        .sum();
                    let sq = g1 * g1;
                    acc.s1[i] += g1;
                    acc.s2[i] += sq;
                    acc.s3[i] += sq * g1;
                    acc.s4[i] += sq * sq;
                }
            }
            acc
        },
        |mut total, part| {
            for i in 0..n {
                total.s1[i] += part.s1[i];
                total.s2[i] += part.s2[i];
                total.s3[i] += part.s3[i];
                total.s4[i] += part.s4[i];
            }
            total
        },
        zero.clone(),
    );

    let m = draws as f64;
    let mut per_row = Vec::with_capacity(n);
    let mut within_count = 0usize;
    for i in 0..n {
        let mean = acc.s1[i] / m;
        let m2 = acc.s2[i] / m - mean * mean;
        let sample_var = (m2 * m / (m - 1.0)).max(0.0);
        // Central fourth moment from raw sums.
        let m4 = (acc.s4[i] - 4.0 * mean * acc.s3[i] + 6.0 * mean * mean * acc.s2[i]
            - 3.0 * mean * mean * mean * mean * m)
            / m;
        let se = ((m4 - m2 * m2).max(0.0) / m).sqrt();
        let within = (sample_var - analytic[i]).abs() <= 3.0 * se + 1e-12;
        within_count += usize::from(within);
        per_row.push(ClusterVarianceRow { analytic: analytic[i], mc_variance: sample_var, se, within });
    }
    let fraction_within = within_count as f64 / n as f64;
    Ok(ClusterVarianceReport {
        draws,
        rows_checked: n,
        fraction_within,
        pass: fraction_within >= 0.95,
        per_row,
    })
}

/// Paired-difference variance estimator
/// `σ²_N(c; x) = (2N)^{-1} Σ_k (Σ_j α_j (ξ_k^{j,1}(x) − ξ_k^{j,2}(x)))²`:
/// unbiased for σ²(c; x); every summand lies in [0, 2].
pub fn sigma_hat(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    row: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    require_conv(f, "sigma_hat")?;
    c.validate_against(f)?;
    f.check_row_width(row.len())?;
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let dists = cluster_samplers(c)?;
    let mut rng = rng::master(seed);
    let mut total = 0.0;
    for _ in 0..n_draws {
        let mut s = 0.0;
        for (j, dist) in dists.iter().enumerate() {
            let pick1 = c.members()[j][dist.sample(&mut rng)];
            let pick2 = c.members()[j][dist.sample(&mut rng)];
            if pick1 != pick2 {
                let v1 = f.terms()[pick1].stump.evaluate(row);
                let v2 = f.terms()[pick2].stump.evaluate(row);
                s += c.alphas()[j] * (v1 - v2);
            }
        }
        total += s * s / 2.0;
    }
    Ok(total / n_draws as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    /// Replicate size N used for this stage.
    pub n_draws: usize,
    pub ceiling: f64,
    pub rows_checked: usize,
    pub max_freq: f64,
    pub pass: bool,
    pub per_row_freq: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BernsteinReport {
    pub gamma: f64,
    pub delta: f64,
    pub draws: usize,
    pub target_one_over_n: f64,
    /// Bernstein step: one-sided exceedance `y(g − f) ≥ δ` on rows with
    /// σ²(c; x) ≤ γ at `N = ⌈4 (γ/δ²) log n⌉`, ceiling `exp(−Nδ²/(4γ))`.
    pub sampling: TailCheck,
    /// Variance-estimator overshoot `{σ̂² ≥ 2γ}` on rows with σ² ≤ γ.
    pub estimator_over: TailCheck,
    /// Variance-estimator undershoot `{σ̂² ≤ 3γ}` on rows with σ² ≥ 4γ.
    pub estimator_under: TailCheck,
    pub k_estimator: f64,
    /// Smallest K from a doubling scan whose estimator gates pass (diagnostic;
    /// says nothing about the inequality's true absolute constant).
    pub smallest_passing_k: Option<f64>,
    pub pass: bool,
}

/// Monte Carlo check of the Bernstein steps of the cluster randomization.
/// The sampling stage checks the approximation-error tail on low-variance
/// rows at `N = ⌈4 (γ/δ²) log n⌉`; the estimator stage checks the
/// paired-difference estimator's
/// over/undershoot events at `N = ⌈K log n / γ⌉` against `exp(−Nγ/K)`.
#[allow(clippy::too_many_arguments)]
pub fn check_bernstein_tails(
    c: &ClusterDecomposition,
    f: &ConvexEnsemble,
    data: &Dataset,
    gamma: f64,
    delta: f64,
    k_estimator: f64,
    draws: usize,
    seed: u64,
    k_scan: bool,
) -> Result<BernsteinReport> {
    require_conv(f, "check_bernstein_tails")?;
    c.validate_against(f)?;
    f.check_row_width(data.p())?;
    if !(delta > 0.0 && delta <= gamma && gamma <= 1.0) {
        return Err(invalid(format!(
            "need 0 < delta <= gamma <= 1, got delta = {delta}, gamma = {gamma}"
        )));
    }
    if !(k_estimator > 0.0) {
        return Err(invalid("K must be positive"));
    }
    if draws == 0 {
        return Err(invalid("draws must be at least 1"));
    }
    let n = data.n();
    let ln_n = (n as f64).ln().max(1.0);
    let sigma2 = cluster_variance_on(c, f, data)?;
    let f_vals: Vec<f64> = exec::map_collect(n, |i| f.eval_raw(data.row(i)));
    let member_vals: Vec<Vec<Vec<f64>>> = c
        .members()
        .iter()
        .map(|member| {
            member
                .iter()
                .map(|&j| f.terms()[j].stump.profile(data))
                .collect()
        })
        .collect();

    // Sampling stage: approximation-error tail on the low-variance rows.
    let low_rows: Vec<usize> = (0..n).filter(|&i| sigma2[i] <= gamma).collect();
    let n2 = ((4.0 * gamma / (delta * delta) * ln_n).ceil() as usize).max(1);
    let sampling_counts = exec::block_fold(
        draws,
        exec::REPLICATE_BLOCK,
        |range| {
            let mut counts = vec![0u64; low_rows.len()];
            let dists = cluster_samplers(c).expect("validated decomposition");
            let m_clusters = c.m();
            let mut tallies: Vec<Vec<u64>> =
                c.members().iter().map(|mem| vec![0u64; mem.len()]).collect();
            for replicate in range {
                let mut rng = rng::stream(seed, replicate as u64);
                for t in tallies.iter_mut() {
                    t.iter_mut().for_each(|x| *x = 0);
                }
                for _ in 0..n2 {
                    for (j, dist) in dists.iter().enumerate() {
                        tallies[j][dist.sample(&mut rng)] += 1;
                    }
                }
                for (slot, &i) in low_rows.iter().enumerate() {
                    let mut g = 0.0;
                    for j in 0..m_clusters {
                        let mut dot = 0.0;
                        for (idx, &count) in tallies[j].iter().enumerate() {
                            if count > 0 {
                                dot += count as f64 * member_vals[j][idx][i];
                            }
                        }
                        g += c.alphas()[j] * (dot / n2 as f64);
                    }
                    if data.label(i) * (g - f_vals[i]) >= delta {
                        counts[slot] += 1;
                    }
                }
            }
            counts
        },
        |mut total, part| {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
            total
        },
        vec![0u64; low_rows.len()],
    );
    let ceiling2 = (-(n2 as f64) * delta * delta / (4.0 * gamma)).exp();
    let sampling = finish_tail_check(&sampling_counts, draws, n2, ceiling2);

    // Estimator stage: variance-estimator tails.
    let (estimator_over, estimator_under) =
        estimator_tail_check(c, data, &sigma2, &member_vals, gamma, k_estimator, draws, seed, STREAM_ESTIMATOR);

    let smallest_passing_k = if k_scan {
        let scan_draws = draws.min((draws / 10).max(500)).max(1);
        let mut found = None;
        for (idx, k_try) in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0].into_iter().enumerate() {
            let (over, under) = estimator_tail_check(
                c,
                data,
                &sigma2,
                &member_vals,
                gamma,
                k_try,
                scan_draws,
                seed,
                STREAM_KSCAN + (idx as u64) * STREAM_ESTIMATOR,
            );
            if over.pass && under.pass {
                found = Some(k_try);
                break;
            }
        }
        found
    } else {
        None
    };

    let pass = sampling.pass && estimator_over.pass && estimator_under.pass;
    Ok(BernsteinReport {
        gamma,
        delta,
        draws,
        target_one_over_n: 1.0 / n as f64,
        sampling,
        estimator_over,
        estimator_under,
        k_estimator,
        smallest_passing_k,
        pass,
    })
}

fn finish_tail_check(counts: &[u64], draws: usize, n_draws: usize, ceiling: f64) -> TailCheck {
    let m = draws as f64;
    let mut max_freq: f64 = 0.0;
    let mut pass = true;
    let per_row_freq: Vec<f64> = counts
        .iter()
        .map(|&count| {
            let freq = count as f64 / m;
            if freq > ceiling + 3.0 * binomial_se(count, draws) {
                pass = false;
            }
            max_freq = max_freq.max(freq);
            freq
        })
        .collect();
    TailCheck { n_draws, ceiling, rows_checked: counts.len(), max_freq, pass, per_row_freq }
}

#[allow(clippy::too_many_arguments)]
fn estimator_tail_check(
    c: &ClusterDecomposition,
    data: &Dataset,
    sigma2: &[f64],
    member_vals: &[Vec<Vec<f64>>],
    gamma: f64,
    k_const: f64,
    draws: usize,
    seed: u64,
    stream_base: u64,
) -> (TailCheck, TailCheck) {
    let n = data.n();
    let ln_n = (n as f64).ln().max(1.0);
    let n4 = ((k_const * ln_n / gamma).ceil() as usize).max(1);
    let low_rows: Vec<usize> = (0..n).filter(|&i| sigma2[i] <= gamma).collect();
    let high_rows: Vec<usize> = (0..n).filter(|&i| sigma2[i] >= 4.0 * gamma).collect();

    let zero = (vec![0u64; low_rows.len()], vec![0u64; high_rows.len()]);
    let (over_counts, under_counts) = exec::block_fold(
        draws,
        exec::REPLICATE_BLOCK,
        |range| {
            let mut over = vec![0u64; low_rows.len()];
            let mut under = vec![0u64; high_rows.len()];
            let dists = cluster_samplers(c).expect("validated decomposition");
            let m_clusters = c.m();
            let mut sums = vec![0.0f64; n];
            for replicate in range {
                let mut rng = rng::stream(seed, stream_base + replicate as u64);
                sums.iter_mut().for_each(|s| *s = 0.0);
                for _ in 0..n4 {
                    // One paired draw per cluster; accumulate the squared
                    // weighted difference at every row.
                    let picks: Vec<(usize, usize)> = dists
                        .iter()
                        .map(|d| (d.sample(&mut rng), d.sample(&mut rng)))
                        .collect();
                    for (i, sum) in sums.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for j in 0..m_clusters {
                            let (p1, p2) = picks[j];
                            if p1 != p2 {
                                s += c.alphas()[j] * (member_vals[j][p1][i] - member_vals[j][p2][i]);
                            }
                        }
                        *sum += s * s / 2.0;
                    }
                }
                for (slot, &i) in low_rows.iter().enumerate() {
                    if sums[i] / n4 as f64 >= 2.0 * gamma {
                        over[slot] += 1;
                    }
                }
                for (slot, &i) in high_rows.iter().enumerate() {
                    if sums[i] / n4 as f64 <= 3.0 * gamma {
                        under[slot] += 1;
                    }
                }
            }
            (over, under)
        },
        |mut total, part| {
            for (t, p) in total.0.iter_mut().zip(part.0) {
                *t += p;
            }
            for (t, p) in total.1.iter_mut().zip(part.1) {
                *t += p;
            }
            total
        },
        zero,
    );
    let ceiling4 = (-(n4 as f64) * gamma / k_const).exp();
    (
        finish_tail_check(&over_counts, draws, n4, ceiling4),
        finish_tail_check(&under_counts, draws, n4, ceiling4),
    )
}
