//! Command-line front end: simulation, estimation, population oracles,
//! evaluation, ROC sweeps, and stability selection, all as pure functions of
//! (input files, flags, seed) to output files.
//!
//! Exit codes: 0 success, 1 usage/validation, 2 data error, 3 numerical
//! failure (non-PD input, solver non-convergence).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use dasg::io;
use dasg::{
    augment, check_lcm, cross_validate, graph_metrics, hs_norms, irrep_diagnostics, ising_pmf,
    lambda_grid, orthonormal_dapo, orthonormal_davo, roc_auc, roc_sweep, sample_davo,
    sample_ising, sample_sign_gaussian, stability_selection, vertex_dapo, vertex_davo,
    DtraceSolver, Error, IsingParams, SampleMethod, SolverConfig,
};

#[derive(Parser)]
#[command(name = "dasg", version, about = "Additive graphical models for discrete data")]
struct Cli {
    /// TOML config file; explicit flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for cross-validation, bootstrap, and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from one of the benchmark models.
    Simulate(SimulateArgs),
    /// Estimate the graph from a dataset (fixed penalty or cross-validated).
    Estimate(EstimateArgs),
    /// Exact population operators of a pmf or Ising model.
    Oracle(OracleArgs),
    /// Compare an estimated edge list against a truth edge list.
    Evaluate(EvaluateArgs),
    /// ROC sweep of the penalized path against a truth graph.
    Roc(RocArgs),
    /// Bootstrap stability selection at a fixed penalty.
    Stability(StabilityArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// exact | gibbs (Ising models only; pattern models always sample signs)
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of cross-validation folds.
    #[arg(long)]
    cv: Option<usize>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    grid_ratio: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the dense estimate as theta.csv.
    #[arg(long)]
    write_theta: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Joint pmf table file.
    #[arg(long, conflicts_with = "ising")]
    pmf: Option<PathBuf>,
    /// Ising parameter matrix CSV.
    #[arg(long)]
    ising: Option<PathBuf>,
    /// Comma-separated 1-based separator nodes; augments the model with the
    /// odd product variables of this set before reporting.
    #[arg(long)]
    augment: Option<String>,
    /// Also write the irrepresentable-condition diagnostics.
    #[arg(long)]
    irrep: bool,
    /// Linear-conditional-mean check, as `i:j,k,...` (1-based).
    #[arg(long)]
    lcm: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    grid_ratio: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional config file; unknown keys are rejected.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<u8>,
    p: Option<usize>,
    n: Option<usize>,
    seed: Option<u64>,
    method: Option<String>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    lambda: Option<f64>,
    cv: Option<usize>,
    grid_points: Option<usize>,
    grid_ratio: Option<f64>,
    rho: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    bootstrap: Option<usize>,
    cutoff: Option<f64>,
    threads: Option<usize>,
    out: Option<String>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", p.display())))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let config = load_config(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(config.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &config),
        Command::Estimate(args) => cmd_estimate(args, &config),
        Command::Oracle(args) => cmd_oracle(args, &config),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Roc(args) => cmd_roc(args, &config),
        Command::Stability(args) => cmd_stability(args, &config),
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Error> {
    value.ok_or_else(|| Error::InvalidArgument(format!("missing required --{flag}")))
}

fn out_dir(arg: Option<PathBuf>, config: &FileConfig) -> Result<PathBuf, Error> {
    let dir = arg
        .or_else(|| config.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn solver_config(
    rho: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    lambda: f64,
    config: &FileConfig,
) -> Result<SolverConfig, Error> {
    let defaults = SolverConfig::default();
    let tol = tol.or(config.tol).unwrap_or(defaults.tol_primal);
    let cfg = SolverConfig {
        rho: rho.or(config.rho).unwrap_or(defaults.rho),
        max_iter: max_iter.or(config.max_iter).unwrap_or(defaults.max_iter),
        tol_primal: tol,
        tol_dual: tol,
        lambda,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: SimulateArgs, config: &FileConfig) -> Result<ExitCode, Error> {
    let model = require(args.model.or(config.model), "model")?;
    let p = require(args.p.or(config.p), "p")?;
    let n = require(args.n.or(config.n), "n")?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let dir = out_dir(args.out, config)?;

    let spec = dasg::pattern(model, p)?;
    let method_name;
    let mut burn_in = 0;
    let mut thin = 0;
    let data = match &spec.kind {
        dasg::simgen::PatternKind::Ising(params) => {
            let method_str = args
                .method
                .or_else(|| config.method.clone())
                .unwrap_or_else(|| "gibbs".to_string());
            let method = match method_str.as_str() {
                "exact" => SampleMethod::Exact,
                "gibbs" => {
                    burn_in = args.burn_in.or(config.burn_in).unwrap_or(dasg::simgen::DEFAULT_BURN_IN);
                    thin = args.thin.or(config.thin).unwrap_or(dasg::simgen::DEFAULT_THINNING);
                    SampleMethod::Gibbs { burn_in, thinning: thin }
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown sampling method {other:?}; use exact or gibbs"
                    )));
                }
            };
            method_name = method_str;
            sample_ising(params, n, seed, method)?
        }
        dasg::simgen::PatternKind::SignGaussian { .. } => {
            method_name = "sign-gaussian".to_string();
            sample_sign_gaussian(&spec, n, seed)?
        }
    };

    io::write_dataset_csv(&dir.join("dataset.csv"), &data)?;
    io::write_graph_tsv(&dir.join("truth.tsv"), &spec.truth)?;
    let mut provenance = String::from("{\n");
    provenance.push_str(&format!("  \"model\": {model},\n"));
    provenance.push_str(&format!("  \"p\": {p},\n"));
    provenance.push_str(&format!("  \"n\": {n},\n"));
    provenance.push_str(&format!("  \"seed\": {seed},\n"));
    provenance.push_str(&format!("  \"method\": \"{method_name}\",\n"));
    provenance.push_str(&format!("  \"burn_in\": {burn_in},\n"));
    provenance.push_str(&format!("  \"thinning\": {thin}\n"));
    provenance.push_str("}\n");
    fs::write(dir.join("provenance.json"), provenance)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(args: EstimateArgs, config: &FileConfig) -> Result<ExitCode, Error> {
    let lambda_flag = args.lambda.or(config.lambda);
    let cv_flag = args.cv.or(config.cv);
    if lambda_flag.is_none() && cv_flag.is_none() {
        return Err(Error::InvalidArgument("need either --lambda or --cv".into()));
    }
    let solver_cfg = solver_config(args.rho, args.tol, args.max_iter, 0.0, config)?;
    let dir = out_dir(args.out, config)?;
    let data = io::read_dataset_csv(&args.data)?;
    let sigma = sample_davo(&data)?;

    let lambda = match (lambda_flag, cv_flag) {
        (Some(lam), None) => lam,
        (None, Some(k)) => {
            let grid = lambda_grid(
                &sigma,
                args.grid_points.or(config.grid_points).unwrap_or(dasg::tuning::DEFAULT_GRID_POINTS),
                args.grid_ratio.or(config.grid_ratio).unwrap_or(dasg::tuning::DEFAULT_GRID_RATIO),
            )?;
            let seed = args.seed.or(config.seed).unwrap_or(0);
            let report = cross_validate(&data, k, &grid, &solver_cfg, seed)?;
            io::write_cv_report(&dir.join("cv.json"), &report)?;
            report.chosen_lambda
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument("--lambda and --cv are mutually exclusive".into()));
        }
        (None, None) => {
            return Err(Error::InvalidArgument("need either --lambda or --cv".into()));
        }
    };

    let cfg = SolverConfig { lambda, ..solver_cfg };
    let solver = DtraceSolver::new(&sigma, cfg.rho)?;
    let fit = solver.fit(&cfg)?;
    io::write_graph_tsv(&dir.join("edges.tsv"), &fit.edges)?;
    io::write_fit_diagnostics(&dir.join("fit.json"), &fit)?;
    if args.write_theta {
        io::write_matrix_csv(&dir.join("theta.csv"), fit.theta.data())?;
    }
    if fit.edges.edge_count() == 0 {
        eprintln!("warning: no edges selected at lambda {lambda}");
    }
    if !fit.converged {
        eprintln!(
            "error: solver did not converge in {} iterations (primal {:.3e}, dual {:.3e})",
            fit.iterations, fit.primal_residual, fit.dual_residual
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_node_list(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidArgument(format!("bad node index {t:?}: {e}")))?
                .checked_sub(1)
                .ok_or_else(|| Error::InvalidArgument("node indices are 1-based".into()))
        })
        .collect()
}

fn cmd_oracle(args: OracleArgs, config: &FileConfig) -> Result<ExitCode, Error> {
    let dir = out_dir(args.out, config)?;
    let pmf = match (&args.pmf, &args.ising) {
        (Some(path), None) => io::read_pmf(path)?,
        (None, Some(path)) => {
            let beta = io::read_matrix_csv(path)?;
            ising_pmf(&IsingParams::new(beta)?)?
        }
        _ => {
            return Err(Error::InvalidArgument("need exactly one of --pmf or --ising".into()));
        }
    };
    let pmf = match &args.augment {
        None => pmf,
        Some(list) => {
            let r = parse_node_list(list)?;
            let (_, augmented) = augment(&pmf, &r)?;
            augmented
        }
    };

    let davo_v = vertex_davo(&pmf)?;
    io::write_matrix_csv(&dir.join("sigma_v.csv"), davo_v.data())?;
    let dapo_v = vertex_dapo(&pmf)?;
    io::write_matrix_csv(&dir.join("theta_v.csv"), dapo_v.data())?;
    let davo_o = orthonormal_davo(&pmf)?;
    io::write_matrix_csv(&dir.join("sigma_o.csv"), davo_o.data())?;
    let dapo_o = orthonormal_dapo(&pmf)?;
    io::write_matrix_csv(&dir.join("theta_o.csv"), dapo_o.data())?;
    let hs = hs_norms(&pmf)?;
    io::write_matrix_csv(&dir.join("hs_norms.csv"), &hs)?;
    let edges = dasg::edges_from_blocks(&dapo_v, dasg::population::POP_ZERO_TOL)?;
    io::write_graph_tsv(&dir.join("edges.tsv"), &edges)?;
    if args.irrep {
        let report = irrep_diagnostics(&pmf)?;
        io::write_irrep_report(&dir.join("irrep.json"), &report)?;
    }
    if let Some(spec) = &args.lcm {
        let (i_str, d_str) = spec
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument("--lcm expects `i:j,k,...`".into()))?;
        let i = parse_node_list(i_str)?[0];
        let d = parse_node_list(d_str)?;
        let check = check_lcm(&pmf, i, &d, 1e-10)?;
        let coef = match &check.coefficients {
            None => "null".to_string(),
            Some(c) => {
                let items: Vec<String> = c.iter().map(|&v| io::fmt_float(v)).collect();
                format!("[{}]", items.join(", "))
            }
        };
        let text = format!(
            "{{\n  \"holds\": {},\n  \"max_residual\": {},\n  \"coefficients\": {}\n}}\n",
            if check.holds { "true" } else { "false" },
            io::fmt_float(check.max_residual),
            coef
        );
        fs::write(dir.join("lcm.json"), text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, Error> {
    let estimate = io::read_graph_tsv(&args.edges, args.p)?;
    let truth = io::read_graph_tsv(&args.truth, args.p)?;
    // without an explicit p, reconcile the two inferred node counts
    let (estimate, truth) = if args.p.is_none() {
        let p = estimate.p().max(truth.p());
        (
            dasg::Graph::with_edges(p, estimate.edges())?,
            dasg::Graph::with_edges(p, truth.edges())?,
        )
    } else {
        (estimate, truth)
    };
    let m = graph_metrics(&estimate, &truth)?;
    let fmt = |v: Option<f64>| v.map_or("null".to_string(), io::fmt_float);
    println!(
        "{{\n  \"tpr\": {},\n  \"tnr\": {},\n  \"f1\": {}\n}}",
        fmt(m.tpr),
        fmt(m.tnr),
        fmt(m.f1)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_roc(args: RocArgs, config: &FileConfig) -> Result<ExitCode, Error> {
    let dir = out_dir(args.out, config)?;
    let data = io::read_dataset_csv(&args.data)?;
    let truth = io::read_graph_tsv(&args.truth, Some(data.p()))?;
    let sigma = sample_davo(&data)?;
    let grid = lambda_grid(
        &sigma,
        args.grid_points.or(config.grid_points).unwrap_or(dasg::tuning::DEFAULT_GRID_POINTS),
        args.grid_ratio.or(config.grid_ratio).unwrap_or(dasg::tuning::DEFAULT_GRID_RATIO),
    )?;
    let cfg = solver_config(args.rho, args.tol, args.max_iter, 0.0, config)?;
    let points = roc_sweep(&data, &truth, &grid, &cfg)?;
    io::write_roc_csv(&dir.join("roc.csv"), &points)?;
    println!("auc {}", io::fmt_float(roc_auc(&points)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_stability(args: StabilityArgs, config: &FileConfig) -> Result<ExitCode, Error> {
    let dir = out_dir(args.out, config)?;
    let data = io::read_dataset_csv(&args.data)?;
    let lambda = require(args.lambda.or(config.lambda), "lambda")?;
    let b = args.bootstrap.or(config.bootstrap).unwrap_or(100);
    let cutoff = args.cutoff.or(config.cutoff).unwrap_or(0.95);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let cfg = solver_config(args.rho, args.tol, args.max_iter, lambda, config)?;
    let report = stability_selection(&data, lambda, b, cutoff, &cfg, seed)?;
    io::write_stability_report(&dir.join("stability.json"), &report)?;
    io::write_matrix_csv(&dir.join("frequencies.csv"), &report.selection_frequency)?;
    io::write_graph_tsv(&dir.join("stable_edges.tsv"), &report.stable_edges)?;
    Ok(ExitCode::SUCCESS)
}
