//! Experiment orchestration: seeded data generation or ingestion,
//! train/holdout splits, bound evaluation, replicate aggregation, and flat
//! CSV plot-data extraction.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clusters;
use crate::covering;
use crate::data::Dataset;
use crate::ensemble::ConvexEnsemble;
use crate::error::{invalid, Result};
use crate::exec;
use crate::margins::{self, MarginProfile};
use crate::report::{dyadic_grid, BoundParams, BoundReport};
use crate::rng;
use crate::sparsity::{self, ClassicExtras, ClassicKind};
use crate::synth::{self, SynthKind, WeightProfile};
use crate::train;

/// Every bound name `--which all` expands to.
pub const ALL_BOUNDS: [&str; 11] = [
    "schapire_margin",
    "margin_nolog",
    "zero_error_rate",
    "linfty_entropy",
    "breiman_min_margin",
    "gamma_dim",
    "gamma_dim_ratio",
    "effective_dim",
    "pointwise_variance",
    "cluster_variance",
    "base_covering",
];

/// Where a replicate's data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    /// Seeded synthetic data, regenerated per replicate.
    Synthetic {
        kind: String,
        n: usize,
        p: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        mu: Option<f64>,
    },
    /// The deterministic decaying-weight fixture (dataset + prebuilt model).
    Fixture {
        terms: usize,
        profile: String,
        #[serde(default)]
        beta: Option<f64>,
        n: usize,
    },
    /// A CSV file on disk, re-split per replicate.
    Csv { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algo: String,
    pub rounds: usize,
}

fn default_v() -> f64 {
    2.0
}
fn default_t() -> f64 {
    3.0
}
fn default_k() -> f64 {
    1.0
}
fn default_delta_depth() -> usize {
    10
}
fn default_p_exponent() -> f64 {
    2.0
}
fn default_m_max() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_delta_depth")]
    pub delta_depth: usize,
    #[serde(default = "default_p_exponent")]
    pub p_exponent: f64,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            v: default_v(),
            t: default_t(),
            k: default_k(),
            delta_depth: default_delta_depth(),
            p_exponent: default_p_exponent(),
            m_max: default_m_max(),
        }
    }
}

impl ParamsConfig {
    pub fn to_bound_params(&self, n: usize) -> Result<BoundParams> {
        BoundParams {
            v: self.v,
            t: self.t,
            k: self.k,
            n,
            delta_grid: dyadic_grid(self.delta_depth.max(1)),
            p_exponent: self.p_exponent,
            m_max: self.m_max,
        }
        .validated()
    }
}

fn default_schema() -> u32 {
    1
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_replicates() -> usize {
    1
}
fn default_bounds() -> Vec<String> {
    vec!["all".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub data: DataSource,
    #[serde(default)]
    pub trainer: Option<TrainerConfig>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_bounds")]
    pub bounds: Vec<String>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(reader: impl std::io::Read) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_reader(reader)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("replicates must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        if self.bounds.is_empty() {
            return Err(invalid("bound selection must be nonempty"));
        }
        for name in self.resolved_bounds() {
            if !ALL_BOUNDS.contains(&name.as_str())
                && name != "example_rate_polynomial"
                && name != "example_rate_exponential"
            {
                return Err(invalid(format!("unknown bound name {name}")));
            }
        }
        match &self.data {
            DataSource::Synthetic { kind, .. } => {
                parse_synth_kind(kind, None)?;
                if self.trainer.is_none() {
                    return Err(invalid("synthetic data sources need a trainer"));
                }
            }
            DataSource::Csv { .. } => {
                if self.trainer.is_none() {
                    return Err(invalid("csv data sources need a trainer"));
                }
            }
            DataSource::Fixture { profile, beta, .. } => {
                parse_weight_profile(profile, *beta)?;
            }
        }
        if let Some(trainer) = &self.trainer {
            if trainer.algo != "adaboost" && trainer.algo != "bagging" {
                return Err(invalid(format!("unknown trainer algo {}", trainer.algo)));
            }
            if trainer.rounds == 0 {
                return Err(invalid("trainer rounds must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn resolved_bounds(&self) -> Vec<String> {
        if self.bounds.iter().any(|b| b == "all") {
            ALL_BOUNDS.iter().map(|s| s.to_string()).collect()
        } else {
            self.bounds.clone()
        }
    }
}

pub fn parse_synth_kind(kind: &str, mu: Option<f64>) -> Result<SynthKind> {
    match kind {
        "two_gaussians" => Ok(SynthKind::TwoGaussians { mu: mu.unwrap_or(2.0) }),
        "noisy_xor" => Ok(SynthKind::NoisyXor),
        other => Err(invalid(format!("unknown synthetic kind {other}"))),
    }
}

pub fn parse_weight_profile(profile: &str, beta: Option<f64>) -> Result<WeightProfile> {
    match profile {
        "polynomial" => Ok(WeightProfile::Polynomial { beta: beta.unwrap_or(2.0) }),
        "exponential" => Ok(WeightProfile::Exponential),
        other => Err(invalid(format!("unknown weight profile {other}"))),
    }
}

/// Stand-in cardinality for the stump class on a sample: every distinct
/// threshold position times two polarities, summed over features.
pub fn stump_class_cardinality(data: &Dataset) -> f64 {
    let mut total = 0.0;
    for feature in 0..data.p() {
        let column: Vec<f64> = (0..data.n()).map(|i| data.row(i)[feature]).collect();
        total += 2.0 * train::candidate_thresholds(&column).len() as f64;
    }
    total
}

/// Evaluates one bound by name. `seed` feeds the cluster search;
/// `beta` feeds the example-rate closed forms.
pub fn evaluate_bound(
    name: &str,
    f: &ConvexEnsemble,
    data: &Dataset,
    profile: &MarginProfile,
    params: &BoundParams,
    seed: u64,
    beta: f64,
) -> Result<BoundReport> {
    if let Some(kind) = ClassicKind::parse(name) {
        let extras = ClassicExtras {
            n_infty: Some(covering::n_infty(f, data)? as f64),
            card_h: Some(stump_class_cardinality(data)),
        };
        return sparsity::classic_bound(kind, profile, params, &extras);
    }
    match name {
        "gamma_dim" => sparsity::bound_gamma_dim(f, profile, params),
        "gamma_dim_ratio" => sparsity::bound_gamma_dim_ratio(f, data, params),
        "effective_dim" => sparsity::bound_sparsity(f, profile, params),
        "pointwise_variance" => clusters::bound_variance(f, data, profile, params),
        "cluster_variance" => clusters::bound_cluster(f, data, profile, params, seed),
        "base_covering" => covering::bound_base_covering(f, data, profile, params),
        "example_rate_polynomial" => {
            sparsity::example_rate(sparsity::RateKind::Polynomial, beta, profile, params)
        }
        "example_rate_exponential" => {
            sparsity::example_rate(sparsity::RateKind::Exponential, beta, profile, params)
        }
        other => Err(invalid(format!("unknown bound name {other}"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexitySummary {
    pub n_infty: usize,
    pub mean_sigma2: f64,
    pub max_sigma2: f64,
    pub min_margin: f64,
    /// (δ, e_n(f, δ)) over the dyadic grid 2^{-2}..2^{-6}.
    pub effective_dimension: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub index: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub test_error: f64,
    pub complexities: ComplexitySummary,
    pub bounds: Vec<BoundReport>,
    /// (δ, P_n(yf ≤ δ)) on the dyadic grid.
    pub margin_series: Vec<(f64, f64)>,
    /// (ε, N⁺(ε)) of the base covering profile.
    pub covering_series: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// (log(1/δ), log value) points entering the fit.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    /// Per bound: fraction of replicates whose total covered the holdout
    /// error. Observational only; the bounds' absolute constants are
    /// unspecified, so no threshold is asserted.
    pub coverage: BTreeMap<String, f64>,
    pub mean_total: BTreeMap<String, f64>,
    pub mean_test_error: f64,
    /// For fixture runs: least-squares slope of log e_n(f, δ) on log(1/δ).
    pub fixture_slope: Option<SlopeFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateReport>,
    pub aggregate: Aggregate,
}

const SEED_DATA: u64 = 0x01;
const SEED_SPLIT: u64 = 0x02;
const SEED_TRAIN: u64 = 0x03;
const SEED_BOUNDS: u64 = 0x04;

/// Runs the configured experiment: per replicate, split/train/evaluate; then
/// aggregate coverage frequencies and means. Identical configs and seeds
/// produce byte-identical serialized reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let csv_data = match &config.data {
        DataSource::Csv { path } => Some(Dataset::load_csv(path)?),
        _ => None,
    };
    let fixture = match &config.data {
        DataSource::Fixture { terms, profile, beta, n } => {
            let profile = parse_weight_profile(profile, *beta)?;
            Some(synth::weight_profile_fixture(*terms, profile, *n)?)
        }
        _ => None,
    };

    let results = exec::map_collect(config.replicates, |r| {
        run_replicate(config, r, csv_data.as_ref(), fixture.as_ref())
    });
    let mut replicates = Vec::with_capacity(config.replicates);
    for result in results {
        replicates.push(result?);
    }

    let mut coverage: BTreeMap<String, f64> = BTreeMap::new();
    let mut mean_total: BTreeMap<String, f64> = BTreeMap::new();
    let m = replicates.len() as f64;
    for rep in &replicates {
        for bound in &rep.bounds {
            let covered = if bound.total >= rep.test_error { 1.0 } else { 0.0 };
            *coverage.entry(bound.bound_name.clone()).or_insert(0.0) += covered / m;
            *mean_total.entry(bound.bound_name.clone()).or_insert(0.0) += bound.total / m;
        }
    }
    let mean_test_error = replicates.iter().map(|r| r.test_error).sum::<f64>() / m;

    let fixture_slope = match &fixture {
        Some((data, f)) => {
            let points: Vec<(f64, f64)> = (2..=6)
                .map(|k| {
                    let delta = 2f64.powi(-k);
                    let e_n = sparsity::effective_dimension(f, delta, data.n())?;
                    Ok(((1.0 / delta).ln(), e_n.ln()))
                })
                .collect::<Result<_>>()?;
            let (slope, intercept) = linear_fit(&points);
            Some(SlopeFit { slope, intercept, points })
        }
        None => None,
    };

    Ok(ExperimentReport {
        schema: 1,
        config: config.clone(),
        replicates,
        aggregate: Aggregate { coverage, mean_total, mean_test_error, fixture_slope },
    })
}

fn run_replicate(
    config: &ExperimentConfig,
    index: usize,
    csv_data: Option<&Dataset>,
    fixture: Option<&(Dataset, ConvexEnsemble)>,
) -> Result<ReplicateReport> {
    let r = index as u64;
    let data: Dataset = match &config.data {
        DataSource::Synthetic { kind, n, p, noise, mu } => {
            let kind = parse_synth_kind(kind, *mu)?;
            synth::synth_data(kind, *n, *p, *noise, rng::subseed(config.seed, SEED_DATA ^ (r << 8)))?
        }
        DataSource::Csv { .. } => csv_data.expect("loaded above").clone(),
        DataSource::Fixture { .. } => fixture.expect("built above").0.clone(),
    };

    // Disjoint, exhaustive train/holdout split.
    let mut indices: Vec<usize> = (0..data.n()).collect();
    let mut split_rng = rng::stream(rng::subseed(config.seed, SEED_SPLIT), r);
    indices.shuffle(&mut split_rng);
    let train_count = ((data.n() as f64 * config.train_fraction).round() as usize)
        .clamp(1, data.n() - 1);
    let (train_idx, test_idx) = indices.split_at(train_count);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train_data = data.subset(&train_idx)?;
    let test_data = data.subset(&test_idx)?;

    let model: ConvexEnsemble = match (&config.trainer, fixture) {
        (_, Some((_, f))) => f.clone(),
        (Some(trainer), None) => {
            let train_seed = rng::subseed(config.seed, SEED_TRAIN ^ (r << 8));
            match trainer.algo.as_str() {
                "adaboost" => train::adaboost(&train_data, trainer.rounds)?,
                "bagging" => train::bagging(&train_data, trainer.rounds, train_seed)?,
                other => return Err(invalid(format!("unknown trainer algo {other}"))),
            }
        }
        (None, None) => return Err(invalid("no trainer and no fixture model")),
    };

    let params = config.params.to_bound_params(train_data.n())?;
    let profile = MarginProfile::from_ensemble(&model, &train_data)?;
    let test_error = margins::test_error(&model, &test_data)?;

    let sigma2 = clusters::pointwise_variance_on(&model, &train_data)?;
    let n_infty = covering::n_infty(&model, &train_data)?;
    let effective_dimension: Vec<(f64, f64)> = (2..=6)
        .map(|k| {
            let delta = 2f64.powi(-k);
            Ok((delta, sparsity::effective_dimension(&model, delta, train_data.n())?))
        })
        .collect::<Result<_>>()?;
    let complexities = ComplexitySummary {
        n_infty,
        mean_sigma2: sigma2.iter().sum::<f64>() / sigma2.len() as f64,
        max_sigma2: sigma2.iter().copied().fold(0.0, f64::max),
        min_margin: profile.min_margin(),
        effective_dimension,
    };

    let bound_seed = rng::subseed(config.seed, SEED_BOUNDS ^ (r << 8));
    let mut bounds = Vec::new();
    for name in config.resolved_bounds() {
        let bound = evaluate_bound(
            &name,
            &model,
            &train_data,
            &profile,
            &params,
            bound_seed,
            2.0,
        )?;
        // Report integrity: the total must re-derive from its parts.
        if let Some(re) = bound.recombine(&params) {
            if (re - bound.total).abs() > 1e-9 * bound.total.abs().max(1.0) {
                return Err(crate::error::Error::Structure(format!(
                    "{} total {} does not recombine from its terms ({re})",
                    bound.bound_name, bound.total
                )));
            }
        }
        bounds.push(bound);
    }

    let margin_series: Vec<(f64, f64)> =
        params.delta_grid.iter().map(|&d| (d, profile.cdf(d))).collect();
    let cov = covering::base_covering_profile(&model, &train_data, None)?;
    let covering_series: Vec<(f64, usize)> =
        cov.eps_grid.iter().copied().zip(cov.counts.iter().copied()).collect();

    Ok(ReplicateReport {
        index,
        train_n: train_data.n(),
        test_n: test_data.n(),
        test_error,
        complexities,
        bounds,
        margin_series,
        covering_series,
    })
}

/// Ordinary least squares fit y = slope·x + intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Serializes a report deterministically (pretty JSON + trailing newline).
pub fn report_to_json(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes one flat CSV series extracted from a report. `which` is one of
/// `margins`, `covering`, `bounds`; `replicate` selects the source
/// replicate. Returns an error for unknown series names.
pub fn emit_plot_data(
    report: &ExperimentReport,
    which: &str,
    replicate: usize,
    path: &Path,
) -> Result<()> {
    let rep = report
        .replicates
        .get(replicate)
        .ok_or_else(|| invalid(format!("replicate {replicate} out of range")))?;
    let mut out = String::new();
    match which {
        "margins" => {
            out.push_str("delta,p_n\n");
            for (delta, p_n) in &rep.margin_series {
                out.push_str(&format!("{delta},{p_n}\n"));
            }
        }
        "covering" => {
            out.push_str("eps,count\n");
            for (eps, count) in &rep.covering_series {
                out.push_str(&format!("{eps},{count}\n"));
            }
        }
        "bounds" => {
            out.push_str("bound,delta,total\n");
            for bound in &rep.bounds {
                for (delta, total) in &bound.curve {
                    out.push_str(&format!("{},{delta},{total}\n", bound.bound_name));
                }
            }
        }
        other => return Err(invalid(format!("unknown plot series {other}"))),
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
