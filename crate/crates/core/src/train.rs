//! Trainers producing convex combinations: exhaustive weighted stump search,
//! AdaBoost, and bagging.

use rand::Rng;

use crate::data::Dataset;
use crate::ensemble::{ConvexEnsemble, Mode, Term};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::rng;
use crate::stump::Stump;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One AdaBoost round as recorded by [`adaboost_with_trace`].
#[derive(Debug, Clone)]
pub struct AdaBoostRound {
    pub stump: Stump,
    pub weighted_error: f64,
    pub alpha: f64,
    /// Example weights after the multiplicative update (they sum to 1).
    pub weights_after: Vec<f64>,
}

/// Candidate thresholds for a feature column: midpoints between consecutive
/// distinct sorted values plus finite sentinels flanking the data (one below
/// the minimum and one above the maximum, giving the two constant
/// dichotomies). The set is finite and complete for stumps on this sample.
pub fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(sorted[0] - 1.0);
    for w in sorted.windows(2) {
        out.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    out.push(sorted[sorted.len() - 1] + 1.0);
    out
}

/// Weighted 0/1 error of a stump, computed by direct summation.
pub fn weighted_error(stump: &Stump, data: &Dataset, weights: &[f64]) -> f64 {
    let mut err = 0.0;
    for i in 0..data.n() {
        if stump.evaluate(data.row(i)) != data.label(i) {
            err += weights[i];
        }
    }
    err
}

/// Minimizes the weighted training error over all candidate stumps
/// (feature × threshold × polarity). Ties break to the lexicographically
/// lowest (feature, threshold, polarity). The returned error is the direct
/// weighted sum for the winning stump and is at most 1/2, which is always
/// achievable because the class contains both constant dichotomies.
pub fn best_stump(data: &Dataset, weights: &[f64]) -> Result<(Stump, f64)> {
    if weights.len() != data.n() {
        return Err(invalid("weights length must match the sample size"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(invalid(format!("weights must sum to 1, got {sum}")));
    }

    // Per-feature scan in parallel, deterministic reduction in feature order.
    let per_feature = exec::map_collect(data.p(), |feature| best_stump_for_feature(data, weights, feature));
    let mut best: Option<(Stump, f64)> = None;
    for cand in per_feature {
        best = Some(match best {
            None => cand,
            Some(cur) => pick_better(cur, cand),
        });
    }
    let (stump, _) = best.expect("p >= 1");
    // Recompute the winner's error by direct summation so the reported value
    // is the plain weighted sum for that stump.
    let err = weighted_error(&stump, data, weights);
    Ok((stump, err))
}

fn pick_better(a: (Stump, f64), b: (Stump, f64)) -> (Stump, f64) {
    if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

fn best_stump_for_feature(data: &Dataset, weights: &[f64], feature: usize) -> (Stump, f64) {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.row(a)[feature].total_cmp(&data.row(b)[feature]));

    // Sweep thresholds in increasing order. For polarity +1 the stump says
    // +1 strictly above the threshold, so moving the threshold past a point
    // with label +1 adds its weight to the error and a -1 label removes it.
    // The polarity -1 error is 1 - error(+1) (total weight
    // is 1 and stumps never abstain); both are tracked from one sweep.
    let below_min = data.row(order[0])[feature] - 1.0;

    // err_plus at a threshold below all data: +1 everywhere above, so the
    // error is the weight of the -1 labels.
    let mut err_plus: f64 = (0..n)
        .filter(|&i| data.label(i) < 0.0)
        .map(|i| weights[i])
        .sum();

    let mut best = {
        let err_minus = 1.0 - err_plus;
        let s_plus = Stump { feature, threshold: below_min, polarity: 1 };
        let s_minus = Stump { feature, threshold: below_min, polarity: -1 };
        // polarity -1 < +1 lexicographically, so compare minus first
        pick_better((s_minus, err_minus), (s_plus, err_plus))
    };

    let mut idx = 0;
    while idx < n {
        let value = data.row(order[idx])[feature];
        // Absorb the whole tie-group at this value.
        while idx < n && data.row(order[idx])[feature] == value {
            let i = order[idx];
            if data.label(i) > 0.0 {
                err_plus += weights[i];
            } else {
                err_plus -= weights[i];
            }
            idx += 1;
        }
        let threshold = if idx < n {
            let next = data.row(order[idx])[feature];
            value + (next - value) / 2.0
        } else {
            value + 1.0
        };
        let err_minus = 1.0 - err_plus;
        let s_minus = Stump { feature, threshold, polarity: -1 };
        let s_plus = Stump { feature, threshold, polarity: 1 };
        best = pick_better(best, pick_better((s_minus, err_minus), (s_plus, err_plus)));
    }
    best
}

/// AdaBoost over the stump class. Runs up to `rounds` rounds of weighted
/// stump search, coefficient `α_k = ½ log((1−e_k)/e_k)`, and the
/// multiplicative example-weight update, then normalizes the α-weighted
/// combination. Deterministic given `data` and `rounds`.
///
/// Degenerate rounds:
/// - `e_k = 0`: the coefficient is infinite; training stops and the perfect
///   stump receives all the weight mass (the infinite-vote limit).
/// - `e_k = 1/2`: `α_k = 0`, the weights do not move, and the next round
///   would repeat forever; training stops with the rounds accumulated so
///   far (an error if no round made progress).
pub fn adaboost(data: &Dataset, rounds: usize) -> Result<ConvexEnsemble> {
    Ok(adaboost_impl(data, rounds, false)?.0)
}

/// AdaBoost with the per-round trace (weighted errors, coefficients, example
/// weights after each update).
pub fn adaboost_with_trace(data: &Dataset, rounds: usize) -> Result<(ConvexEnsemble, Vec<AdaBoostRound>)> {
    let (f, trace) = adaboost_impl(data, rounds, true)?;
    Ok((f, trace))
}

fn adaboost_impl(
    data: &Dataset,
    rounds: usize,
    trace: bool,
) -> Result<(ConvexEnsemble, Vec<AdaBoostRound>)> {
    if rounds == 0 {
        return Err(invalid("rounds must be at least 1"));
    }
    let n = data.n();
    let mut weights = vec![1.0 / n as f64; n];
    let mut terms: Vec<Term> = Vec::new();
    let mut history = Vec::new();

    for _ in 0..rounds {
        let (stump, e) = best_stump(data, &weights)?;
        if e == 0.0 {
            // Perfect weak hypothesis: infinite vote dominates the mixture.
            terms = vec![Term { weight: 1.0, stump }];
            if trace {
                history.push(AdaBoostRound {
                    stump,
                    weighted_error: e,
                    alpha: f64::INFINITY,
                    weights_after: weights.clone(),
                });
            }
            break;
        }
        let alpha = 0.5 * ((1.0 - e) / e).ln();
        if alpha <= 0.0 {
            // e = 1/2 exactly: the round contributes nothing and the state
            // is a fixed point; stop.
            break;
        }
        terms.push(Term { weight: alpha, stump });
        let mut z = 0.0;
        for i in 0..n {
            let h = stump.evaluate(data.row(i));
            weights[i] *= (-data.label(i) * alpha * h).exp();
            z += weights[i];
        }
        for w in &mut weights {
            *w /= z;
        }
        if trace {
            history.push(AdaBoostRound {
                stump,
                weighted_error: e,
                alpha,
                weights_after: weights.clone(),
            });
        }
    }

    if terms.is_empty() {
        return Err(Error::DegenerateEnsemble(
            "no AdaBoost round made progress (weighted error stuck at 1/2)".into(),
        ));
    }
    let f = ConvexEnsemble::new(Mode::Conv, terms)?.normalize()?;
    Ok((f, history))
}

/// Bootstrap resample: `n` rows drawn uniformly with replacement from the
/// seeded generator. Same shape as the input.
pub fn bootstrap_sample(data: &Dataset, seed: u64) -> Result<Dataset> {
    let n = data.n();
    let mut rng = rng::master(seed);
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    data.subset(&indices)
}

/// Bagging: `rounds` bootstrap resamples, the best stump of each under
/// uniform weights, all combined with equal votes 1/T and normalized
/// (duplicate stumps merge).
pub fn bagging(data: &Dataset, rounds: usize, seed: u64) -> Result<ConvexEnsemble> {
    if rounds == 0 {
        return Err(invalid("rounds must be at least 1"));
    }
    let stumps = exec::map_collect(rounds, |r| -> Result<Stump> {
        let sample = bootstrap_sample(data, rng::subseed(seed, r as u64))?;
        let uniform = vec![1.0 / sample.n() as f64; sample.n()];
        Ok(best_stump(&sample, &uniform)?.0)
    });
    let weight = 1.0 / rounds as f64;
    let mut terms = Vec::with_capacity(rounds);
    for s in stumps {
        terms.push(Term { weight, stump: s? });
    }
    ConvexEnsemble::new(Mode::Conv, terms)?.normalize()
}
