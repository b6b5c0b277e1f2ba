use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ksmm::bounds::{
    check_rademacher_hnorm, check_rademacher_onenorm, gap_bound_hnorm, gap_bound_norm_ball,
    gap_bound_onenorm, norm_chain_check, BoundInputs, EXACT_MAX_SAMPLES,
};
use ksmm::data::{
    load_csv, load_mds, load_pgm_dir, save_csv, save_mds, wishart_classes, Dataset, SimulationSpec,
};
use ksmm::experiment::{evaluate, grid_search, run_simulation, Grid, SimulationConfig};
use ksmm::multiclass::train_classifier;
use ksmm::persist::{load_model, save_model};
use ksmm::{CacheMode, Classifier, Error, HNormContext, KernelSpec, Matrix, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "ksmm", version, about = "Kernel support matrix machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a binary or one-vs-one model and write it to a file.
    Train(TrainArgs),
    /// Print the predicted class of every sample.
    Predict(PredictArgs),
    /// Report accuracy, per-class precision/recall/F1 and macro-F1.
    Eval(EvalArgs),
    /// Run the Wishart simulation study.
    Simulate(SimulateArgs),
    /// Report generalization gap terms and Rademacher checks.
    Bounds(BoundsArgs),
    /// Convert between CSV, MDS and PGM-directory datasets.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Linear,
    Poly,
    Gauss,
}

#[derive(Clone, Copy, ValueEnum)]
enum CacheFlag {
    On,
    Off,
    Auto,
}

impl From<CacheFlag> for CacheMode {
    fn from(c: CacheFlag) -> Self {
        match c {
            CacheFlag::On => CacheMode::Enabled,
            CacheFlag::Off => CacheMode::Disabled,
            CacheFlag::Auto => CacheMode::Auto,
        }
    }
}

#[derive(Args, Clone)]
struct KernelArgs {
    #[arg(long, value_enum, default_value = "linear")]
    kernel: Family,
    /// Diagonal offset of the linear and polynomial kernels.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Entrywise power of the polynomial kernel.
    #[arg(long, default_value_t = 2)]
    beta: u32,
    /// Width of the Gaussian kernel.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec, Failure> {
        let spec = match self.kernel {
            Family::Linear => KernelSpec::Linear { alpha: self.alpha },
            Family::Poly => KernelSpec::Polynomial {
                alpha: self.alpha,
                beta: self.beta,
            },
            Family::Gauss => KernelSpec::Gaussian { gamma: self.gamma },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outer-loop budget (default scales with the sample count).
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    #[arg(long, value_enum, default_value = "auto")]
    cache: CacheFlag,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Failure> {
        let cfg = SolverConfig {
            max_outer_loops: self.max_outer,
            ..SolverConfig::default()
        }
        .with_c(self.c)
        .with_seed(self.seed)
        .with_kkt_tol(self.kkt_tol);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    /// C values tried by grid search.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0, 100.0])]
    c_grid: Vec<f64>,
    /// Gaussian widths tried by grid search.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4])]
    gamma_grid: Vec<f64>,
    /// Share of the training data held out for parameter selection.
    #[arg(long, default_value_t = 0.25)]
    validation: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<Grid, Failure> {
        let grid = Grid {
            c_values: self.c_grid.clone(),
            gamma_values: self.gamma_grid.clone(),
        };
        grid.validate()?;
        if !(self.validation > 0.0 && self.validation < 1.0) {
            return Err(Failure::usage("--validation must lie in (0, 1)"));
        }
        Ok(grid)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset: .mds, .csv or a directory of per-class PGM folders.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Select C (and gamma for the Gaussian kernel) on a validation split
    /// before training on all data.
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    grid_args: GridArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write `index,label,predicted` rows to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also write the metrics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sample side lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30])]
    p: Vec<usize>,
    /// Examples per trial before the train/test halving.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200])]
    n_total: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value = "gauss")]
    kernel: Family,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    beta: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    #[command(flatten)]
    grid_args: GridArgs,
    /// Also write `train_size,p,mean,std` rows to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Dataset to analyze; a Wishart sample is drawn when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model whose weight matrix defines the H-norm.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Side length of the synthetic samples.
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 10)]
    n_total: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Weight norm bound B.
    #[arg(long, default_value_t = 1.0)]
    weight_bound: f64,
    /// Loss upper bound c.
    #[arg(long, default_value_t = 1.0)]
    loss_cap: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Sign draws for Monte-Carlo checks.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConvertArgs {
    /// .csv, .mds or a PGM class directory.
    #[arg(long)]
    input: PathBuf,
    /// .csv or .mds.
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidContext(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    if path.is_dir() {
        return Ok(load_pgm_dir(path)?);
    }
    match extension(path).as_str() {
        "mds" => Ok(load_mds(path)?),
        "csv" => Ok(load_csv(path)?),
        other => Err(Failure::usage(format!(
            "cannot infer dataset format of {} (extension `{other}`); use .mds, .csv or a directory",
            path.display()
        ))),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<u8, Failure> {
    let data = load_dataset(&args.data)?;
    let mut spec = args.kernel.spec()?;
    let mut cfg = args.solver.config()?;
    if args.grid {
        let grid = args.grid_args.grid()?;
        let search = grid_search(
            &data,
            spec,
            &grid,
            &cfg,
            args.grid_args.validation,
            cfg.seed,
        )?;
        println!(
            "grid search: C={} {} (validation accuracy {:.4})",
            search.best.c, search.best.kernel, search.best.accuracy
        );
        spec = search.best.kernel;
        cfg = cfg.with_c(search.best.c);
    }
    let model = train_classifier(&data, spec, &cfg, args.solver.cache.into())?;
    save_model(&model, &args.out)?;
    let (m, n) = model.shape();
    println!(
        "trained {} on {} samples of shape {m}x{n}, C={}",
        spec,
        data.len(),
        cfg.c
    );
    for (pos, neg, binary) in model.binary_models() {
        let meta = binary.meta();
        println!(
            "pair {pos:>4} vs {neg:<4} supports={:<5} iterations={:<8} objective={:<14.8} bias={:<12.6} {}",
            binary.support_count(),
            meta.iterations,
            meta.objective,
            binary.bias(),
            if meta.kkt_converged() { "converged" } else { "NOT CONVERGED" }
        );
    }
    println!("model written to {}", args.out.display());
    if model.converged() {
        Ok(0)
    } else {
        eprintln!("warning: at least one solve stopped before meeting the KKT tolerance");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn check_shape(model: &Classifier, data: &Dataset) -> Result<(), Failure> {
    if model.shape() != data.shape() {
        let (a, b) = model.shape();
        let (c, d) = data.shape();
        return Err(Failure {
            code: EXIT_DATA,
            message: format!("model expects {a}x{b} samples, dataset has {c}x{d}"),
        });
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<u8, Failure> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    check_shape(&model, &data)?;
    let predicted = model.predict_all(data.samples())?;
    let mut table = String::from("index,label,predicted\n");
    for (i, (label, p)) in data.labels().iter().zip(&predicted).enumerate() {
        writeln!(table, "{i},{label},{p}").expect("string write");
    }
    print!("{table}");
    if let Some(path) = &args.csv {
        fs::write(path, table)?;
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<u8, Failure> {
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    check_shape(&model, &data)?;
    let cm = evaluate(&model, &data)?;
    let accuracy = cm.accuracy()?;
    println!("samples   {}", cm.total());
    println!("accuracy  {accuracy:.6}");
    println!("macro_f1  {:.6}", cm.macro_f1());
    println!();
    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>8}",
        "class", "precision", "recall", "f1", "support"
    );
    let mut csv = String::from("class,precision,recall,f1,support\n");
    for s in cm.class_scores() {
        println!(
            "{:>8} {:>10.6} {:>10.6} {:>10.6} {:>8}",
            s.class, s.precision, s.recall, s.f1, s.support
        );
        writeln!(
            csv,
            "{},{},{},{},{}",
            s.class, s.precision, s.recall, s.f1, s.support
        )
        .expect("string write");
    }
    println!();
    print!("confusion (rows true, columns predicted)\n{cm}");
    writeln!(csv, "accuracy,{accuracy}\nmacro_f1,{}", cm.macro_f1()).expect("string write");
    if let Some(path) = &args.csv {
        fs::write(path, csv)?;
    }
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, Failure> {
    let kernel = KernelArgs {
        kernel: args.kernel,
        alpha: args.alpha,
        beta: args.beta,
        gamma: 1.0,
    }
    .spec()?;
    let solver = SolverConfig {
        max_outer_loops: args.max_outer,
        ..SolverConfig::default()
    }
    .with_kkt_tol(args.kkt_tol)
    .with_seed(args.seed);
    solver.validate()?;
    let cfg = SimulationConfig {
        kernel,
        grid: args.grid_args.grid()?,
        solver,
        validation_fraction: args.grid_args.validation,
    };
    println!("N & p & accuracy");
    let mut csv = String::from("train_size,p,mean,std\n");
    for &n_total in &args.n_total {
        for &p in &args.p {
            let spec = SimulationSpec {
                p,
                n_total,
                noise_sigma: args.noise_sigma,
                trials: args.trials,
                seed: args.seed,
            };
            let summary = run_simulation(&spec, &cfg)?;
            println!("{}", summary.table_row());
            writeln!(
                csv,
                "{},{},{},{}",
                summary.train_size,
                p,
                summary.mean_accuracy(),
                summary.std_accuracy()
            )
            .expect("string write");
        }
    }
    if let Some(path) = &args.csv {
        fs::write(path, csv)?;
    }
    Ok(0)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<u8, Failure> {
    let data = match &args.data {
        Some(path) => load_dataset(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let per_class = args.n_total.div_ceil(2);
            wishart_classes(args.p, per_class, &[args.p, 2 * args.p], 0.0, &mut rng)?
        }
    };
    let samples = data.samples();
    let (m, n) = data.shape();
    let weight = match &args.model {
        Some(path) => {
            let model = load_model(path)?;
            if model.shape() != (m, n) {
                return Err(Failure {
                    code: EXIT_DATA,
                    message: "model and dataset shapes differ".into(),
                });
            }
            let models = model.binary_models();
            models[0].2.v_matrix().clone()
        }
        None => {
            let mut v = Matrix::zeros(n, n);
            for x in samples {
                v.axpy(1.0, &x.transpose().matmul(x)?)?;
            }
            v
        }
    };
    let ctx = HNormContext::new(&weight)?;
    let mut max_fro = 0.0f64;
    let mut max_h = 0.0f64;
    let mut dominated = true;
    for x in samples {
        let r = norm_chain_check(x, &ctx)?;
        max_fro = max_fro.max(r.frobenius);
        max_h = max_h.max(r.h_norm);
        dominated &= r.dominated;
    }
    let max_one = samples.iter().map(Matrix::one_norm).fold(0.0, f64::max);
    let base = BoundInputs {
        n_samples: samples.len(),
        rho: args.rho,
        delta: args.delta,
        radius: 1.0,
        weight_bound: args.weight_bound,
        loss_cap: args.loss_cap,
        m,
        n,
    };
    let with_radius = |r: f64| BoundInputs {
        radius: r.max(f64::MIN_POSITIVE),
        ..base
    };
    println!("samples            {} of shape {m}x{n}", samples.len());
    println!("max frobenius norm {max_fro:.6}");
    println!("max H-norm         {max_h:.6}");
    println!("max 1-norm         {max_one:.6}");
    println!("H-norm <= frobenius for every sample: {}", pass(dominated));
    println!();
    println!(
        "gap, norm ball (R = max frobenius) {:.6}",
        gap_bound_norm_ball(&with_radius(max_fro))?
    );
    println!(
        "gap, H-norm (R = max H-norm)        {:.6}",
        gap_bound_hnorm(&with_radius(max_h))?
    );
    println!(
        "gap, 1-norm (R = max 1-norm)        {:.6}",
        gap_bound_onenorm(&with_radius(max_one))?
    );
    println!();
    let mode = if samples.len() <= EXACT_MAX_SAMPLES {
        "exact".to_string()
    } else {
        format!("monte-carlo, {} draws", args.draws)
    };
    println!("rademacher checks ({mode})");
    let hn = check_rademacher_hnorm(samples, &ctx, args.draws, args.seed)?;
    let on = check_rademacher_onenorm(samples, args.draws, args.seed)?;
    for (name, c) in [("H-norm average", hn), ("1-norm average", on)] {
        println!(
            "{name:<18} estimate {:.6} (stderr {:.2e})  bound {:.6}  {}",
            c.estimate.mean,
            c.estimate.stderr,
            c.bound,
            pass(c.passed)
        );
    }
    Ok(if dominated && hn.passed && on.passed {
        0
    } else {
        1
    })
}

fn cmd_convert(args: &ConvertArgs) -> Result<u8, Failure> {
    let data = load_dataset(&args.input)?;
    match extension(&args.out).as_str() {
        "mds" => save_mds(&data, &args.out)?,
        "csv" => save_csv(&data, &args.out)?,
        other => {
            return Err(Failure::usage(format!(
                "cannot write extension `{other}`; use .mds or .csv"
            )))
        }
    }
    let (m, n) = data.shape();
    println!(
        "wrote {} samples of shape {m}x{n} to {}",
        data.len(),
        args.out.display()
    );
    Ok(0)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("KSMM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Failure::usage(format!(
            "KSMM_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    if threads == 0 {
        return Err(Failure::usage("KSMM_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Convert(a) => cmd_convert(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
