//! `votebound`: train voting stump ensembles, inspect margin distributions
//! and complexity measures, evaluate bound reports, and run the Monte Carlo
//! verification checks.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical-convergence
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use votebound_core::clusters;
use votebound_core::covering;
use votebound_core::ensemble::ConvexEnsemble;
use votebound_core::error::Error;
use votebound_core::experiment::{
    self, emit_plot_data, evaluate_bound, run_experiment, ExperimentConfig, ExperimentReport,
};
use votebound_core::margins::{self, MarginProfile};
use votebound_core::report::{dyadic_grid, BoundParams};
use votebound_core::synth::{self, WeightProfile};
use votebound_core::train;
use votebound_core::verify;
use votebound_core::Dataset;

#[derive(Parser)]
#[command(
    name = "votebound",
    about = "Margin distributions, complexity measures, and generalization-bound reports for stump voting classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (and, for the weight fixture, a model).
    Synth(SynthArgs),
    /// Train an ensemble with AdaBoost or bagging.
    Train(TrainArgs),
    /// Emit the empirical margin distribution as CSV.
    Margins(MarginsArgs),
    /// Compute a complexity measure of a model on a dataset.
    Complexity(ComplexityArgs),
    /// Evaluate bound reports and the holdout test error.
    Bounds(BoundsArgs),
    /// Monte Carlo verification of the randomized constructions.
    Verify(VerifyArgs),
    /// Run a replicated experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Extract flat CSV plot series from an experiment report.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// two-gaussians | noisy-xor | weight-fixture
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Class-center magnitude for two-gaussians.
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    /// Term count for the weight fixture.
    #[arg(long, default_value_t = 64)]
    terms: usize,
    /// Weight profile for the fixture: polynomial | exponential.
    #[arg(long, default_value = "polynomial")]
    profile: String,
    /// Decay exponent for the polynomial profile.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the fixture model (weight-fixture only).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// adaboost | bagging
    #[arg(long)]
    algo: String,
    #[arg(long)]
    rounds: usize,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model path (JSON document).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MarginsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// dyadic | linear:<step>
    #[arg(long, default_value = "dyadic")]
    grid: String,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// variance | clusters | covering
    #[arg(long)]
    measure: String,
    #[arg(long, default_value_t = 4)]
    m_max: usize,
    /// ε grid for the covering measure (only `dyadic` is built in).
    #[arg(long, default_value = "dyadic")]
    grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path prefix; `<prefix>.csv` holds the series and, for
    /// clusters, `<prefix>.json` the decomposition document.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training data (the empirical measure of the bounds).
    #[arg(long)]
    train: PathBuf,
    /// Holdout data for the side-by-side test error.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    t: f64,
    #[arg(long = "K", default_value_t = 1.0)]
    k: f64,
    #[arg(long = "V", default_value_t = 2.0)]
    v: f64,
    /// all | comma-separated bound names
    #[arg(long, default_value = "all")]
    which: String,
    #[arg(long, default_value_t = 10)]
    delta_depth: usize,
    #[arg(long, default_value_t = 4)]
    m_max: usize,
    #[arg(long, default_value_t = 2.0)]
    p_exponent: f64,
    /// Decay exponent for the example-rate bounds.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// maurey | cluster-variance | sigma-hat | bernstein
    #[arg(long)]
    check: String,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Head size for the Maurey check.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Cluster count for the cluster-based checks.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Ceiling constant for the variance-estimator tail checks.
    #[arg(long = "K", default_value_t = 16.0)]
    k: f64,
    /// Row index for the sigma-hat check.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Replicate size N for the sigma-hat check.
    #[arg(long, default_value_t = 100)]
    n_draws: usize,
    /// Scan doubling K values for the smallest passing estimator-tail constant.
    #[arg(long, default_value_t = false)]
    k_scan: bool,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Experiment report JSON.
    #[arg(long)]
    report: PathBuf,
    /// margins | covering | bounds
    #[arg(long)]
    series: String,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Margins(args) => cmd_margins(args),
        Command::Complexity(args) => cmd_complexity(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::PlotData(args) => cmd_plot_data(args),
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    match args.kind.as_str() {
        "two-gaussians" | "two_gaussians" => {
            let kind = synth::SynthKind::TwoGaussians { mu: args.mu };
            let data = synth::synth_data(kind, args.n, args.p, args.noise, args.seed)?;
            data.save_csv(&args.out)
        }
        "noisy-xor" | "noisy_xor" => {
            let data =
                synth::synth_data(synth::SynthKind::NoisyXor, args.n, args.p, args.noise, args.seed)?;
            data.save_csv(&args.out)
        }
        "weight-fixture" | "weight_fixture" => {
            let profile = match args.profile.as_str() {
                "polynomial" => WeightProfile::Polynomial { beta: args.beta },
                "exponential" => WeightProfile::Exponential,
                other => return Err(invalid(format!("unknown weight profile {other}"))),
            };
            let (data, model) = synth::weight_profile_fixture(args.terms, profile, args.n)?;
            data.save_csv(&args.out)?;
            if let Some(model_out) = args.model_out {
                model.save_json_path(model_out)?;
            }
            Ok(())
        }
        other => Err(invalid(format!("unknown synthetic kind {other}"))),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let data = Dataset::load_csv(&args.data)?;
    let model = match args.algo.as_str() {
        "adaboost" => train::adaboost(&data, args.rounds)?,
        "bagging" => train::bagging(&data, args.rounds, args.seed)?,
        other => return Err(invalid(format!("unknown trainer algo {other}"))),
    };
    model.save_json_path(&args.out)
}

fn parse_margin_grid(spec: &str, n: usize) -> Result<Vec<f64>, Error> {
    if spec == "dyadic" {
        return Ok(dyadic_grid(12));
    }
    if let Some(step) = spec.strip_prefix("linear:") {
        let step: f64 = step
            .parse()
            .map_err(|_| invalid(format!("bad linear grid step {step}")))?;
        if !(step > 0.0 && step <= 1.0) {
            return Err(invalid("linear grid step must lie in (0, 1]".into()));
        }
        let count = (1.0 / step).floor() as usize;
        let _ = n;
        return Ok((1..=count).map(|i| i as f64 * step).collect());
    }
    Err(invalid(format!("unknown grid spec {spec} (dyadic | linear:<step>)")))
}

fn write_or_print(path: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_margins(args: MarginsArgs) -> Result<(), Error> {
    let model = ConvexEnsemble::load_json_path(&args.model)?;
    let data = Dataset::load_csv(&args.data)?;
    let profile = MarginProfile::from_ensemble(&model, &data)?;
    let mut grid = parse_margin_grid(&args.grid, data.n())?;
    grid.sort_by(f64::total_cmp);
    let mut out = String::from("delta,p_n\n");
    for delta in grid {
        out.push_str(&format!("{delta},{}\n", profile.cdf(delta)));
    }
    write_or_print(&args.out, &out)
}

fn cmd_complexity(args: ComplexityArgs) -> Result<(), Error> {
    let model = ConvexEnsemble::load_json_path(&args.model)?;
    let data = Dataset::load_csv(&args.data)?;
    let csv_path = args.out.with_extension("csv");
    match args.measure.as_str() {
        "variance" => {
            let sigma2 = clusters::pointwise_variance_on(&model, &data)?;
            let mut out = String::from("row,sigma2\n");
            for (i, s) in sigma2.iter().enumerate() {
                out.push_str(&format!("{i},{s}\n"));
            }
            std::fs::write(&csv_path, out)?;
        }
        "clusters" => {
            let mut best = None;
            for m in 1..=args.m_max.min(model.len()) {
                let search = clusters::search_clusters(&model, &data, m, args.seed)?;
                let better = match &best {
                    None => true,
                    Some((obj, _)) => search.objective < *obj,
                };
                if better {
                    best = Some((search.objective, search));
                }
            }
            let (_, search) = best.ok_or_else(|| invalid("no clustering found".into()))?;
            let sigma2 = clusters::cluster_variance_on(&search.decomposition, &model, &data)?;
            let mut out = String::from("row,sigma2\n");
            for (i, s) in sigma2.iter().enumerate() {
                out.push_str(&format!("{i},{s}\n"));
            }
            std::fs::write(&csv_path, out)?;
            let doc = serde_json::to_string_pretty(&search)?;
            std::fs::write(args.out.with_extension("json"), doc + "\n")?;
        }
        "covering" => {
            if args.grid != "dyadic" {
                return Err(invalid(format!("unknown covering grid {}", args.grid)));
            }
            let profile = covering::base_covering_profile(&model, &data, None)?;
            let mut out = String::from("eps,count\n");
            for (eps, count) in profile.eps_grid.iter().zip(&profile.counts) {
                out.push_str(&format!("{eps},{count}\n"));
            }
            std::fs::write(&csv_path, out)?;
            // ψ̂ nodes alongside the raw counts.
            let mut psi = String::from("delta,psi_hat\n");
            for k in 1..=8 {
                let delta = 2f64.powi(-k);
                psi.push_str(&format!("{delta},{}\n", covering::entropy_integral(&profile, delta)?));
            }
            std::fs::write(args.out.with_extension("psi.csv"), psi)?;
        }
        other => return Err(invalid(format!("unknown measure {other}"))),
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), Error> {
    let model = ConvexEnsemble::load_json_path(&args.model)?;
    let train_data = Dataset::load_csv(&args.train)?;
    let test_data = Dataset::load_csv(&args.test)?;
    let params = BoundParams {
        v: args.v,
        t: args.t,
        k: args.k,
        n: train_data.n(),
        delta_grid: dyadic_grid(args.delta_depth),
        p_exponent: args.p_exponent,
        m_max: args.m_max,
    }
    .validated()?;
    let profile = MarginProfile::from_ensemble(&model, &train_data)?;
    let names: Vec<String> = if args.which == "all" {
        experiment::ALL_BOUNDS.iter().map(|s| s.to_string()).collect()
    } else {
        args.which.split(',').map(|s| s.trim().to_string()).collect()
    };
    let mut reports = Vec::new();
    for name in &names {
        reports.push(evaluate_bound(
            name,
            &model,
            &train_data,
            &profile,
            &params,
            args.seed,
            args.beta,
        )?);
    }
    let test_error = margins::test_error(&model, &test_data)?;
    let doc = serde_json::json!({
        "schema": 1,
        "test_error": test_error,
        "min_margin": profile.min_margin(),
        "zero_error_delta": profile.zero_error_threshold(params.alpha(), &params.delta_grid),
        "note": "totals use user constants K and t; compare shapes, not absolute coverage",
        "bounds": reports,
    });
    write_or_print(&args.out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Error> {
    let model = ConvexEnsemble::load_json_path(&args.model)?;
    let data = Dataset::load_csv(&args.data)?;
    let doc = match args.check.as_str() {
        "maurey" => {
            let report =
                verify::check_maurey_tail(&model, &data, args.delta, args.d, args.samples, args.seed)?;
            println!("maurey tail check: {}", if report.pass { "PASS" } else { "FAIL" });
            serde_json::to_value(&report)?
        }
        "cluster-variance" => {
            let search = clusters::search_clusters(&model, &data, args.m, args.seed)?;
            let report = verify::check_cluster_variance(
                &search.decomposition,
                &model,
                &data,
                args.samples,
                args.seed,
            )?;
            println!(
                "cluster variance identity: {} (fraction within: {:.4})",
                if report.pass { "PASS" } else { "FAIL" },
                report.fraction_within
            );
            serde_json::to_value(&report)?
        }
        "sigma-hat" => {
            if args.row >= data.n() {
                return Err(invalid(format!("row {} out of range", args.row)));
            }
            let search = clusters::search_clusters(&model, &data, args.m, args.seed)?;
            let analytic =
                clusters::cluster_variance(&search.decomposition, &model, data.row(args.row))?;
            let mut estimates = Vec::with_capacity(args.samples.max(1));
            for r in 0..args.samples.max(1) {
                estimates.push(verify::sigma_hat(
                    &search.decomposition,
                    &model,
                    data.row(args.row),
                    args.n_draws,
                    votebound_core::rng::subseed(args.seed, r as u64),
                )?);
            }
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let rel = if analytic > 0.0 { (mean - analytic).abs() / analytic } else { 0.0 };
            println!(
                "sigma-hat unbiasedness: mean {mean:.6} vs analytic {analytic:.6} (rel err {rel:.4})"
            );
            serde_json::json!({
                "row": args.row,
                "n_draws": args.n_draws,
                "samples": args.samples,
                "mean_sigma_hat": mean,
                "analytic": analytic,
                "relative_error": rel,
            })
        }
        "bernstein" => {
            let search = clusters::search_clusters(&model, &data, args.m, args.seed)?;
            let report = verify::check_bernstein_tails(
                &search.decomposition,
                &model,
                &data,
                args.gamma,
                args.delta,
                args.k,
                args.samples,
                args.seed,
                args.k_scan,
            )?;
            println!("bernstein tail checks: {}", if report.pass { "PASS" } else { "FAIL" });
            serde_json::to_value(&report)?
        }
        other => return Err(invalid(format!("unknown check {other}"))),
    };
    write_or_print(&args.out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Error> {
    let file = std::fs::File::open(&args.config)?;
    let config = ExperimentConfig::from_json(file)?;
    let report = run_experiment(&config)?;
    let bytes = experiment::report_to_json(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<(), Error> {
    let file = std::fs::File::open(&args.report)?;
    let report: ExperimentReport = serde_json::from_reader(file)?;
    emit_plot_data(&report, &args.series, args.replicate, &args.out)
}
