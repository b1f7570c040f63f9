//! `rbdlr` command line: benchmark generation, model fitting, feature
//! extraction, 1-NN classification and cosine K-means clustering.
//!
//! Every command that consumes randomness takes an explicit seed, and all
//! outputs are byte-reproducible for a fixed seed; `--threads 1` pins the
//! worker pool for fully deterministic runs.

mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rbdlr::eval;
use rbdlr::solver;
use rbdlr::synth::{add_gaussian_noise, generate_subspace_data, SyntheticSpec};
use rbdlr::{Dataset, Error, Hyperparams, Mat, Mode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn invalid(msg: impl Into<String>) -> Self {
        CliError::Core(Error::InvalidInput(msg.into()))
    }

    /// Diagnostic class printed in the one-line error report.
    fn class(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                Error::InvalidInput(_) => "invalid-input",
                Error::Numerical(_) => "numerical",
                Error::Diverged { .. } => "divergence",
                Error::ZeroWeightMass => "undefined-ratio",
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "rbdlr", version, about = "Robust block-diagonal latent representation toolkit")]
struct Cli {
    /// Size of the worker thread pool (1 = single-threaded deterministic run).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the union-of-subspaces benchmark (X.csv, labels.txt).
    Synth(SynthArgs),
    /// Add dense zero-mean Gaussian noise to a matrix.
    Noise(NoiseArgs),
    /// Fit the joint model and write the learned matrices plus report.json.
    Fit(FitArgs),
    /// Project a data matrix through a fitted model: P*X.
    Features(FeaturesArgs),
    /// 1-nearest-neighbor classification in a feature space.
    Classify(ClassifyArgs),
    /// Cosine K-means on a model-derived representation, with metrics.
    Cluster(ClusterArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    subspaces: usize,
    #[arg(long, default_value_t = 200)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 10)]
    basis_dim: usize,
    #[arg(long, default_value_t = 9)]
    samples_per_subspace: usize,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct NoiseArgs {
    /// Input matrix.
    input: PathBuf,
    /// Per-entry noise variance.
    #[arg(long)]
    variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rbdlr,
    Fllrr,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Data matrix (columns are samples).
    input: PathBuf,
    /// Ground-truth labels; also the default source of k.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Block count of the regularizer.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Rbdlr)]
    mode: ModeArg,
    /// Provenance seed echoed into report.json (the fit itself is seedless).
    #[arg(long)]
    seed: Option<u64>,
    /// Output model directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FeaturesArgs {
    /// Fitted model directory.
    #[arg(long)]
    model: PathBuf,
    /// Data matrix to project.
    #[arg(long)]
    data: PathBuf,
    /// Output feature matrix file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ClassifyArgs {
    #[arg(long)]
    train_features: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long)]
    test_features: PathBuf,
    /// Ground-truth test labels; enables metrics.json.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory (predictions.txt, optionally metrics.json).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Representation {
    /// Principal features U*Z with U = X - E.
    Uz,
    /// The data matrix X as given.
    Raw,
    /// The recovered clean data U = X - E.
    Clean,
    /// Salient features P*U.
    Salient,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Uz => "uz",
            Representation::Raw => "raw",
            Representation::Clean => "clean",
            Representation::Salient => "salient",
        }
    }
}

#[derive(clap::Args)]
struct ClusterArgs {
    /// Fitted model directory.
    #[arg(long)]
    model: PathBuf,
    /// Data matrix the model was fitted on.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth labels; enables accuracy/F-score and the default k.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Number of clusters; defaults to the distinct label count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 30)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which representation to cluster.
    #[arg(long, value_enum, default_value_t = Representation::Uz)]
    input: Representation,
    /// Output directory (assignments.txt, metrics.json).
    #[arg(short, long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error ({}): {e}", e.class());
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            t
        }
        None => rayon::current_num_threads(),
    };
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Fit(args) => cmd_fit(args, threads),
        Command::Features(args) => cmd_features(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Cluster(args) => cmd_cluster(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        num_subspaces: args.subspaces,
        ambient_dim: args.ambient_dim,
        basis_dim: args.basis_dim,
        samples_per_subspace: args.samples_per_subspace,
        seed: args.seed,
    };
    let data = generate_subspace_data(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    io::write_matrix(&args.out.join("X.csv"), data.x())?;
    io::write_labels(&args.out.join("labels.txt"), data.labels().unwrap_or(&[]))
}

fn cmd_noise(args: NoiseArgs) -> Result<(), CliError> {
    let x = io::read_matrix(&args.input)?;
    let noisy = add_gaussian_noise(&x, args.variance, args.seed)?;
    io::write_matrix(&args.out, &noisy)
}

/// Everything report.json promises: the hyperparameters actually used,
/// run provenance, and the full convergence trail.
#[derive(Serialize)]
struct FitReportDoc<'a> {
    hyperparams: &'a Hyperparams,
    seed: Option<u64>,
    threads: usize,
    iterations: usize,
    converged: bool,
    final_residuals: (f64, f64),
    residual_history: &'a [(f64, f64)],
    objective_history: &'a [f64],
    wall_time_seconds: f64,
}

fn cmd_fit(args: FitArgs, threads: usize) -> Result<(), CliError> {
    let x = io::read_matrix(&args.input)?;
    let labels = args.labels.as_deref().map(io::read_labels).transpose()?;
    let data = Dataset::new(x, labels)?;

    let mut hp = match args.mode {
        ModeArg::Rbdlr => Hyperparams::default(),
        ModeArg::Fllrr => Hyperparams::default().fllrr(),
    };
    if let Some(v) = args.alpha {
        hp.alpha = v;
    }
    if let Some(v) = args.beta {
        hp.beta = v;
    }
    if let Some(v) = args.gamma {
        hp.gamma = v;
    }
    if let Some(v) = args.k {
        hp.k = Some(v);
    }
    if let Some(v) = args.mu0 {
        hp.mu0 = v;
    }
    if let Some(v) = args.mu_max {
        hp.mu_max = v;
    }
    if let Some(v) = args.eta {
        hp.eta = v;
    }
    if let Some(v) = args.eps {
        hp.eps = v;
    }
    if let Some(v) = args.max_iter {
        hp.max_iter = v;
    }
    // resolve k up front so report.json records the effective value
    if hp.mode == Mode::Rbdlr && hp.k.is_none() {
        hp.k = data.num_classes();
    }

    let fit = solver::fit(&data, &hp)?;
    io::save_model(&args.out, &fit)?;
    let doc = FitReportDoc {
        hyperparams: &hp,
        seed: args.seed,
        threads,
        iterations: fit.report.iterations,
        converged: fit.report.converged,
        final_residuals: fit
            .report
            .residual_history
            .last()
            .copied()
            .unwrap_or((f64::NAN, f64::NAN)),
        residual_history: &fit.report.residual_history,
        objective_history: &fit.report.objective_history,
        wall_time_seconds: fit.report.wall_time_seconds,
    };
    write_json(&args.out.join("report.json"), &doc)
}

fn cmd_features(args: FeaturesArgs) -> Result<(), CliError> {
    let model = io::load_model(&args.model)?;
    let x = io::read_matrix(&args.data)?;
    let feats = eval::salient_features(&model.p, &x)?;
    io::write_matrix(&args.out, &feats)
}

#[derive(Serialize)]
struct ClassifyMetrics {
    accuracy: f64,
    num_test: usize,
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let train = io::read_matrix(&args.train_features)?;
    let train_labels = io::read_labels(&args.train_labels)?;
    let test = io::read_matrix(&args.test_features)?;
    if train_labels.len() != train.ncols() {
        return Err(CliError::invalid(format!(
            "{} labels for {} training columns",
            train_labels.len(),
            train.ncols()
        )));
    }
    let pred = eval::knn1_classify(&train, &train_labels, &test)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    io::write_labels(&args.out.join("predictions.txt"), &pred)?;
    if let Some(truth_path) = &args.truth {
        let truth = io::read_labels(truth_path)?;
        if truth.len() != pred.len() {
            return Err(CliError::invalid(format!(
                "{} truth labels for {} test columns",
                truth.len(),
                pred.len()
            )));
        }
        let hits = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
        let metrics = ClassifyMetrics {
            accuracy: hits as f64 / pred.len() as f64,
            num_test: pred.len(),
        };
        write_json(&args.out.join("metrics.json"), &metrics)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterMetrics<'a> {
    input: &'a str,
    k: usize,
    restarts: usize,
    seed: u64,
    accuracy: Option<f64>,
    f_score: Option<f64>,
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), CliError> {
    let model = io::load_model(&args.model)?;
    let x = io::read_matrix(&args.data)?;
    let labels = args.labels.as_deref().map(io::read_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != x.ncols() {
            return Err(CliError::invalid(format!(
                "{} labels for {} data columns",
                l.len(),
                x.ncols()
            )));
        }
    }
    let feats = representation(args.input, &model, &x)?;
    let k = match args.k.or_else(|| {
        labels.as_ref().map(|l| {
            let mut distinct = l.clone();
            distinct.sort_unstable();
            distinct.dedup();
            distinct.len()
        })
    }) {
        Some(k) => k,
        None => return Err(CliError::Usage("pass --k or --labels to fix the cluster count".into())),
    };
    let assignments = eval::kmeans_cosine(&feats, k, args.restarts, args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    io::write_labels(&args.out.join("assignments.txt"), &assignments)?;
    let (accuracy, f_score) = match &labels {
        Some(truth) => (
            Some(eval::clustering_accuracy(&assignments, truth)?),
            Some(eval::pairwise_f_score(&assignments, truth)?),
        ),
        None => (None, None),
    };
    let metrics = ClusterMetrics {
        input: args.input.name(),
        k,
        restarts: args.restarts,
        seed: args.seed,
        accuracy,
        f_score,
    };
    write_json(&args.out.join("metrics.json"), &metrics)
}

fn representation(which: Representation, model: &io::ModelParts, x: &Mat) -> Result<Mat, CliError> {
    if model.e.shape() != x.shape() {
        return Err(CliError::invalid(format!(
            "model error matrix is {}x{} but the data is {}x{}",
            model.e.nrows(),
            model.e.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    match which {
        Representation::Raw => Ok(x.clone()),
        Representation::Clean => Ok(x - &model.e),
        Representation::Uz => {
            if model.z.nrows() != x.ncols() || model.z.ncols() != x.ncols() {
                return Err(CliError::invalid(format!(
                    "coefficient matrix is {}x{}, expected {}x{}",
                    model.z.nrows(),
                    model.z.ncols(),
                    x.ncols(),
                    x.ncols()
                )));
            }
            Ok((x - &model.e) * &model.z)
        }
        Representation::Salient => {
            let u = x - &model.e;
            Ok(eval::salient_features(&model.p, &u)?)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
