//! Command line interface: simulate synthetic multi-view data, fit the
//! mixture models, sweep hyperparameters with BIC selection, report block
//! structure, and dump Laplacian spectra.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvmm::bd::{self, BdConfig};
use mvmm::error::Error;
use mvmm::io::{self, BdMeta, ModelFile, PenaltyMeta};
use mvmm::laplacian;
use mvmm::log_pen::{self, LogPenConfig};
use mvmm::mixtures::{self, FitTrace, GmmConfig};
use mvmm::model::{self, EmConfig, MultiViewData};
use mvmm::select::{self, FitSummary};
use mvmm::sim::{self, ExperimentConfig, SimConfig};

#[derive(Parser)]
#[command(
    name = "mvmm",
    version,
    about = "Multi-view mixture models with structured membership tables"
)]
struct Cli {
    /// Worker threads for hyperparameter sweeps (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from a simulation config (JSON or TOML).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model and write a JSON model document.
    Fit(FitArgs),
    /// Sweep a hyperparameter grid and select by BIC.
    Select(SelectArgs),
    /// Report the block structure of a fitted model.
    Blocks {
        #[arg(long)]
        model: PathBuf,
        /// Support threshold; defaults to 1e-8 times the largest entry.
        #[arg(long)]
        support_tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Laplacian spectra of a nonnegative matrix (CSV with header row).
    Spectrum {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo comparison experiment (config in JSON or TOML).
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV of long-format results.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// View CSV, repeat once per view (row-aligned across views).
    #[arg(long = "view", required = true)]
    views: Vec<PathBuf>,
    /// mvmm | log | bd | cat
    #[arg(long)]
    method: String,
    /// Clusters per view, e.g. "10,10" (a single value for cat).
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sparsity level of the log-penalized fitter.
    #[arg(long)]
    lambda: Option<f64>,
    /// Objective-monitoring offset of the log-penalized fitter.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    /// Target block count of the block diagonal fitter.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    alpha_factor: f64,
    #[arg(long, default_value_t = 0.01)]
    c_heuristic: f64,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    reg_scale: f64,
    /// Plain EM iterations used to initialize the penalized fitters.
    #[arg(long, default_value_t = 10)]
    init_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long = "view", required = true)]
    views: Vec<PathBuf>,
    /// log | bd
    #[arg(long)]
    method: String,
    /// Grid: comma list ("0.001,0.005") or inclusive range ("1..8").
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON copy of the report.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Optional directory for per-candidate model documents.
    #[arg(long)]
    models_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 = input error, 3 = numeric failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Shape(_)
        | Error::Contract(_)
        | Error::InvalidInput(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Infeasible(_)
        | Error::NonConvergence(_)
        | Error::DegenerateIterate { .. }
        | Error::BlocksUnattainable { .. } => 3,
    }
}

/// MVMM_SEED overrides any --seed for CI reproducibility.
fn effective_seed(cli_seed: u64) -> u64 {
    match std::env::var("MVMM_SEED") {
        Ok(v) => v.parse().unwrap_or(cli_seed),
        Err(_) => cli_seed,
    }
}

fn run(command: Command) -> mvmm::Result<()> {
    match command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Blocks {
            model,
            support_tol,
            out,
        } => cmd_blocks(&model, support_tol, out.as_deref()),
        Command::Spectrum { matrix, out } => cmd_spectrum(&matrix, out.as_deref()),
        Command::Experiment { config, out } => cmd_experiment(&config, &out),
    }
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> mvmm::Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

fn cmd_simulate(config_path: &Path, out: &Path) -> mvmm::Result<()> {
    let mut config: SimConfig = parse_config(config_path)?;
    config.seed = effective_seed(config.seed);
    std::fs::create_dir_all(out)?;

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let pi = sim::make_pi(&config.pi, &mut rng)?;
    let truth_model = sim::sample_model(&pi, &config.sigma_mean, &config.dims, &mut rng)?;
    let (data, truth) = sim::sample_dataset(&truth_model, config.n_train, &mut rng)?;

    for (v, view) in data.views().iter().enumerate() {
        io::write_view_csv(&out.join(format!("view_{v}.csv")), view, "x")?;
    }
    // Truth labels: one row per observation.
    {
        let mut writer = csv::Writer::from_path(out.join("labels.csv"))?;
        let mut header = vec!["cell".to_string(), "overall".to_string(), "block".to_string()];
        for v in 0..pi.num_views() {
            header.push(format!("view_{v}"));
        }
        writer.write_record(&header)?;
        for i in 0..config.n_train {
            let mut row = vec![
                truth.cell[i].to_string(),
                truth.overall[i].to_string(),
                truth.block[i].to_string(),
            ];
            for v in 0..pi.num_views() {
                row.push(truth.per_view[v][i].to_string());
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }
    let pi_doc = serde_json::json!({
        "shape": pi.shape(),
        "values": pi.flat(),
        "num_blocks": truth.blocks.num_blocks,
        "config": serde_json::to_value(&config)?,
    });
    std::fs::write(out.join("pi.json"), serde_json::to_string_pretty(&pi_doc)?)?;
    println!(
        "wrote {} views, labels and pi.json to {}",
        pi.num_views(),
        out.display()
    );
    Ok(())
}

fn load_views(paths: &[PathBuf]) -> mvmm::Result<MultiViewData> {
    let views = paths
        .iter()
        .map(|p| io::read_view_csv(p))
        .collect::<mvmm::Result<Vec<_>>>()?;
    MultiViewData::new(views)
}

fn bd_model_file(fit: &bd::BdFit, seed: u64, config: serde_json::Value) -> ModelFile {
    let trace = FitTrace {
        objective: fit
            .trace
            .round_objectives
            .iter()
            .flatten()
            .copied()
            .collect(),
        converged: fit.trace.converged,
        iterations: fit.trace.rounds,
        best_restart: 0,
    };
    let mut file = ModelFile::from_model("bd", &fit.model, seed, trace, config);
    file.bd = Some(BdMeta {
        d: fit.d.iter().copied().collect(),
        epsilon: fit.epsilon,
        alpha_history: fit.trace.alpha_history.clone(),
        eigsum: fit.trace.eigsum.clone(),
        blocks: fit.blocks.clone(),
    });
    file
}

fn cmd_fit(args: FitArgs) -> mvmm::Result<()> {
    let data = load_views(&args.views)?;
    let seed = effective_seed(args.seed);
    let mut em = EmConfig::new(args.k.clone(), seed);
    em.n_init = args.n_init;
    em.max_iter = args.max_iter;
    em.rel_tol = args.rel_tol;
    em.reg_scale = args.reg_scale;

    let file = match args.method.as_str() {
        "mvmm" => {
            let (model, trace) = model::fit_em(&data, &em)?;
            ModelFile::from_model("mvmm", &model, seed, trace, serde_json::to_value(&em)?)
        }
        "log" => {
            let lambda = args.lambda.ok_or_else(|| {
                Error::InvalidInput("--lambda is required for the log method".into())
            })?;
            let mut cfg = LogPenConfig::new(lambda, em);
            cfg.delta = args.delta;
            cfg.init_iters = args.init_iters;
            let (model, trace) = log_pen::fit_log_pen(&data, &cfg)?;
            let mut file =
                ModelFile::from_model("log", &model, seed, trace, serde_json::to_value(&cfg)?);
            file.penalty = Some(PenaltyMeta {
                lambda,
                delta: cfg.delta,
            });
            file
        }
        "bd" => {
            let b = args
                .b
                .ok_or_else(|| Error::InvalidInput("--b is required for the bd method".into()))?;
            let mut cfg = BdConfig::new(b, em);
            cfg.epsilon = args.epsilon;
            cfg.alpha0 = args.alpha0;
            cfg.alpha_factor = args.alpha_factor;
            cfg.c_heuristic = args.c_heuristic;
            cfg.init_iters = args.init_iters;
            let fit = bd::fit_bd(&data, &cfg)?;
            bd_model_file(&fit, seed, serde_json::to_value(&cfg)?)
        }
        "cat" => {
            if args.k.len() != 1 {
                return Err(Error::InvalidInput(
                    "cat takes a single --k (total components)".into(),
                ));
            }
            let gmm = GmmConfig {
                k: args.k[0],
                max_iter: args.max_iter,
                rel_tol: args.rel_tol,
                n_init: args.n_init,
                reg_scale: args.reg_scale,
                seed,
            };
            let concat = data.concatenated();
            let (view, mixing, trace) = mixtures::fit_gmm(&concat, &gmm)?;
            // Stored as a one-view model document whose table holds the
            // mixing weights.
            let pi = mvmm::model::ProbTable::new(
                ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[gmm.k]), mixing.to_vec())
                    .expect("mixing shape"),
            )?;
            let model = mvmm::model::MvmmModel::new(vec![view], pi)?;
            let mut file =
                ModelFile::from_model("cat", &model, seed, trace, serde_json::to_value(&gmm)?);
            file.mixing = Some(mixing.to_vec());
            file
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?} (expected mvmm | log | bd | cat)"
            )));
        }
    };
    file.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn parse_grid(spec: &str) -> mvmm::Result<Vec<f64>> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad grid range start {lo:?}")))?;
        let hi: usize = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad grid range end {hi:?}")))?;
        return Ok((lo..=hi).map(|v| v as f64).collect());
    }
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad grid value {tok:?}")))
        })
        .collect()
}

fn cmd_select(args: SelectArgs) -> mvmm::Result<()> {
    let data = load_views(&args.views)?;
    let seed = effective_seed(args.seed);
    let n = data.n();
    let mut em = EmConfig::new(args.k.clone(), seed);
    em.n_init = args.n_init;

    if let Some(dir) = &args.models_dir {
        std::fs::create_dir_all(dir)?;
    }

    let report = match args.method.as_str() {
        "log" => {
            let cells: usize = args.k.iter().product();
            let grid = match &args.grid {
                Some(g) => parse_grid(g)?,
                None => log_pen::lambda_grid(cells, 20),
            };
            select::sweep_and_select(
                |lambda| {
                    let cfg = LogPenConfig::new(lambda, em.clone());
                    let (model, trace) = log_pen::fit_log_pen(&data, &cfg)?;
                    if let Some(dir) = &args.models_dir {
                        let mut file = ModelFile::from_model(
                            "log",
                            &model,
                            seed,
                            trace,
                            serde_json::to_value(&cfg)?,
                        );
                        file.penalty = Some(PenaltyMeta {
                            lambda,
                            delta: cfg.delta,
                        });
                        file.save(&dir.join(format!("log_lambda_{lambda:.6e}.json")))?;
                    }
                    let pi_hat = model.pi.as_matrix()?;
                    let blocks = laplacian::count_blocks_matrix(
                        &pi_hat,
                        laplacian::default_support_tol(&pi_hat.view().into_dyn()),
                    );
                    Ok(FitSummary {
                        log_lik: model::log_likelihood(&model, &data),
                        dof: select::dof_diag_gaussian(&model),
                        support_size: model.pi.support_size(),
                        num_blocks: blocks.num_blocks,
                    })
                },
                &grid,
                n,
            )?
        }
        "bd" => {
            let grid = match &args.grid {
                Some(g) => parse_grid(g)?,
                None => (1..=args.k.iter().copied().min().unwrap_or(1))
                    .map(|v| v as f64)
                    .collect(),
            };
            select::sweep_and_select(
                |b| {
                    let cfg = BdConfig::new(b as usize, em.clone());
                    let fit = bd::fit_bd(&data, &cfg)?;
                    if let Some(dir) = &args.models_dir {
                        bd_model_file(&fit, seed, serde_json::to_value(&cfg)?)
                            .save(&dir.join(format!("bd_b_{b}.json")))?;
                    }
                    let d_tol = laplacian::default_support_tol(&fit.d.view().into_dyn());
                    Ok(FitSummary {
                        log_lik: model::log_likelihood(&fit.model, &data),
                        dof: select::dof_diag_gaussian(&fit.model),
                        support_size: fit.d.iter().filter(|&&v| v > d_tol).count(),
                        num_blocks: fit.blocks.num_blocks,
                    })
                },
                &grid,
                n,
            )?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown sweep method {other:?} (expected log | bd)"
            )));
        }
    };

    io::write_selection_csv(&args.out, &report)?;
    if let Some(json) = &args.json {
        std::fs::write(json, serde_json::to_string_pretty(&report)?)?;
    }
    println!(
        "swept {} candidates; chose {} = {}",
        report.candidates.len(),
        if args.method == "bd" { "B" } else { "lambda" },
        report.candidates[report.chosen].hyperparam
    );
    Ok(())
}

fn cmd_blocks(model_path: &Path, support_tol: Option<f64>, out: Option<&Path>) -> mvmm::Result<()> {
    let file = ModelFile::load(model_path)?;
    let model = file.to_model()?;
    // For block diagonal fits report the structure of D, otherwise of pi.
    let (matrix, source) = match &file.bd {
        Some(meta) => (
            ndarray::Array2::from_shape_vec((file.pi_shape[0], file.pi_shape[1]), meta.d.clone())
                .map_err(|e| Error::Shape(e.to_string()))?,
            "d",
        ),
        None => (model.pi.as_matrix()?, "pi"),
    };
    let tol =
        support_tol.unwrap_or_else(|| laplacian::default_support_tol(&matrix.view().into_dyn()));
    let blocks = laplacian::count_blocks_matrix(&matrix, tol);
    let doc = serde_json::json!({
        "source": source,
        "support_tol": tol,
        "num_blocks": blocks.num_blocks,
        "degenerate": blocks.degenerate,
        "zero_rows": blocks.zero_rows(),
        "zero_cols": blocks.zero_cols(),
        "row_block": blocks.row_block(),
        "col_block": blocks.col_block(),
        "row_perm": blocks.row_perm(),
        "col_perm": blocks.col_perm(),
        "support_size": matrix.iter().filter(|&&v| v.abs() > tol).count(),
    });
    emit_json(&doc, out)
}

fn cmd_spectrum(matrix_path: &Path, out: Option<&Path>) -> mvmm::Result<()> {
    let matrix = io::read_matrix_csv(matrix_path)?;
    if matrix.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput(
            "spectrum expects a nonnegative matrix".into(),
        ));
    }
    let report = laplacian::spectrum_report(&matrix);
    let blocks = laplacian::count_blocks_matrix(
        &matrix,
        laplacian::default_support_tol(&matrix.view().into_dyn()),
    );
    let doc = serde_json::json!({
        "sym": report.sym,
        "un": report.un,
        "sym_zero_count": laplacian::zero_eigenvalue_count(&report.sym),
        "un_zero_count": laplacian::zero_eigenvalue_count(&report.un),
        "blocks": blocks,
    });
    emit_json(&doc, out)
}

fn cmd_experiment(config_path: &Path, out: &Path) -> mvmm::Result<()> {
    let mut config: ExperimentConfig = parse_config(config_path)?;
    config.sim.seed = effective_seed(config.sim.seed);
    let rows = sim::run_experiment(&config)?;
    io::write_results_csv(out, &rows)?;
    println!("wrote {} result rows to {}", rows.len(), out.display());
    Ok(())
}

fn emit_json(doc: &serde_json::Value, out: Option<&Path>) -> mvmm::Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}
