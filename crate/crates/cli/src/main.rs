//! `sqk`: data generation, training, kernel learning, two-stage QCT runs,
//! seeded experiments, boundary export and shot-noise estimation.
//!
//! Exit codes: 0 success, 1 runtime or per-seed failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqk_core::datasets::{generate, TaskKind, TaskSpec};
use sqk_core::experiment::{export_boundary, run_comparison, ExperimentConfig, GridSpec, Method};
use sqk_core::io;
use sqk_core::metric_learning::{learn_hyperparams, FidelityClassifier, LearnedHyperparams, Objective, SearchConfig};
use sqk_core::quasi_conformal::{qct_pipeline_with, AngleRule, QctConfig};
use sqk_core::shot_sim::estimate_batch;
use sqk_core::svm::{self, KernelSpec, LabeledDataset, SvmModel, SvmOptions};
use sqk_core::{AnglePolicy, Error, Execution, Point2, SqueezedKernelParams};

#[derive(Parser)]
#[command(name = "sqk", version, about = "Squeezed-state kernel learning and quasi-conformal SVMs")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labelled train/test split for one of the synthetic tasks.
    GenData(GenData),
    /// Train a soft-margin SVM with a squeezed kernel.
    Train(Train),
    /// Learn (r, theta) of the polar-offset kernel by maximising class separation.
    Learn(Learn),
    /// Two-stage quasi-conformal SVM.
    Qct(Qct),
    /// Multi-seed experiment for one or more methods.
    Experiment(Experiment),
    /// Decision values on a grid, as x1,x2,f CSV.
    Boundary(Boundary),
    /// Shot-noise kernel estimates for index pairs.
    Estimate(Estimate),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Shared squeezing angle.
    #[arg(long, conflicts_with = "theta")]
    phi: Option<f64>,
    /// Offset of the per-point polar angle.
    #[arg(long)]
    theta: Option<f64>,
}

impl KernelArgs {
    fn params(&self) -> sqk_core::Result<SqueezedKernelParams> {
        let angle = match self.theta {
            Some(theta) => AnglePolicy::PolarOffset { theta },
            None => AnglePolicy::Fixed { phi: self.phi.unwrap_or(0.0) },
        };
        SqueezedKernelParams::new(self.gamma, self.r, angle)
    }
}

#[derive(Args)]
struct GenData {
    /// TaskSpec JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long)]
    n_train_per_class: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = svm::DEFAULT_BOX_C)]
    box_c: f64,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct Learn {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 40.0)]
    gamma: f64,
    /// `hs` or `fisher`.
    #[arg(long, default_value = "hs", value_parser = parse_objective)]
    objective: Objective,
    /// SearchConfig JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Qct {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    gamma: f64,
    /// QctConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma_ratio: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    h0: Option<f64>,
    /// `polar`, `aligned` or `none`.
    #[arg(long, value_parser = parse_rule)]
    angle_rule: Option<RuleArg>,
    /// Offset for the polar rule.
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    box_c: Option<f64>,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum RuleArg {
    Polar,
    Aligned,
    None,
}

#[derive(Args)]
struct Experiment {
    /// ExperimentConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    /// May be repeated; methods then share data and stage-1 models per seed.
    #[arg(long)]
    method: Vec<Method>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    box_c: Option<f64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    n_train_per_class: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Result JSON; a per-seed CSV is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Boundary {
    /// SVM model JSON from `train` or `qct`.
    #[arg(long, conflicts_with = "learned")]
    model: Option<PathBuf>,
    /// Learned hyperparameters JSON; boundary of the fidelity classifier on `--train`.
    #[arg(long, requires = "train")]
    learned: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    xmin: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    xmax: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    ymin: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    ymax: f64,
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Estimate {
    /// CSV with `x1,x2` columns (extra columns ignored).
    #[arg(long)]
    points: PathBuf,
    /// CSV with `i,j` columns.
    #[arg(long)]
    pairs: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    match s {
        "hs" | "hilbert_schmidt" => Ok(Objective::HilbertSchmidt),
        "fisher" => Ok(Objective::Fisher),
        _ => Err(format!("unknown objective '{s}' (expected hs or fisher)")),
    }
}

fn parse_rule(s: &str) -> Result<RuleArg, String> {
    match s {
        "polar" => Ok(RuleArg::Polar),
        "aligned" | "boundary_aligned" => Ok(RuleArg::Aligned),
        "none" => Ok(RuleArg::None),
        _ => Err(format!("unknown angle rule '{s}' (expected polar, aligned or none)")),
    }
}

/// Reading a config document counts as configuration: failures exit with 2.
fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> sqk_core::Result<T> {
    io::load_json(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json(v: &serde_json::Value) -> sqk_core::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn gen_data(a: &GenData) -> sqk_core::Result<()> {
    let base: Option<TaskSpec> = a.config.as_deref().map(load_config).transpose()?;
    let spec = TaskSpec {
        task: a.task.or(base.map(|b| b.task)).ok_or_else(|| Error::Config("--task is required".into()))?,
        n_train_per_class: a.n_train_per_class.or(base.map(|b| b.n_train_per_class)).unwrap_or(20),
        n_test_total: a.n_test.or(base.map(|b| b.n_test_total)).unwrap_or(8),
        seed: a.seed.or(base.map(|b| b.seed)).unwrap_or(0),
    };
    spec.validate()?;
    let (train, test) = generate(&spec)?;
    io::save_dataset(&a.train_out, &train)?;
    if let Some(p) = &a.test_out {
        io::save_dataset(p, &test)?;
    }
    print_json(&serde_json::json!({ "spec": spec, "n_train": train.len(), "n_test": test.len() }))
}

fn load_test(path: &Option<PathBuf>) -> sqk_core::Result<Option<LabeledDataset>> {
    path.as_ref().map(io::load_dataset).transpose()
}

fn model_summary(m: &SvmModel, train: &LabeledDataset, test: Option<&LabeledDataset>) -> sqk_core::Result<serde_json::Value> {
    Ok(serde_json::json!({
        "n_support": m.n_support(),
        "bias": m.bias,
        "iterations": m.iterations,
        "kkt_residual": m.kkt_residual(),
        "train_accuracy": m.accuracy(train)?,
        "test_accuracy": test.map(|t| m.accuracy(t)).transpose()?,
    }))
}

fn train(a: &Train, opts: &SvmOptions) -> sqk_core::Result<()> {
    let params = a.kernel.params()?;
    let data = io::load_dataset(&a.train)?;
    let test = load_test(&a.test)?;
    let m = svm::train_with(&data, &KernelSpec::plain(params), a.box_c, opts)?;
    if let Some(p) = &a.model_out {
        std::fs::write(p, m.to_json()?)?;
    }
    print_json(&model_summary(&m, &data, test.as_ref())?)
}

fn learn(a: &Learn, exec: Execution) -> sqk_core::Result<()> {
    let search: SearchConfig = a.config.as_deref().map(load_config).transpose()?.unwrap_or_default();
    let search = SearchConfig { exec, ..search };
    let data = io::load_dataset(&a.train)?;
    let test = load_test(&a.test)?;
    let learned = learn_hyperparams(&data, a.gamma, a.objective, &search)?;
    if let Some(p) = &a.out {
        io::save_json(p, &learned)?;
    }
    let clf = FidelityClassifier::new(&data, &learned.kernel_params())?;
    let acc = |d: &LabeledDataset| svm::accuracy_of(|x| clf.predict(x), d);
    print_json(&serde_json::json!({
        "r": learned.r,
        "theta": learned.theta,
        "objective_value": learned.objective_value,
        "flat": learned.flat,
        "fidelity_train_accuracy": acc(&data)?,
        "fidelity_test_accuracy": test.as_ref().map(acc).transpose()?,
    }))
}

fn qct(a: &Qct, opts: &SvmOptions) -> sqk_core::Result<()> {
    let mut cfg: QctConfig = a.config.as_deref().map(load_config).transpose()?.unwrap_or_default();
    if let Some(v) = a.gamma_ratio {
        cfg.gamma_ratio = v;
    }
    if let Some(v) = a.r {
        cfg.r = v;
    }
    if let Some(v) = a.h0 {
        cfg.h0 = v;
    }
    if let Some(v) = a.box_c {
        cfg.box_c = v;
    }
    match (a.angle_rule, a.offset) {
        (Some(RuleArg::Aligned), _) => cfg.angle_rule = AngleRule::BoundaryAligned,
        (Some(RuleArg::None), _) => {
            cfg.angle_rule = AngleRule::None;
            cfg.r = 0.0;
        }
        (Some(RuleArg::Polar), off) => {
            cfg.angle_rule = AngleRule::PolarOffset { offset: off.unwrap_or(std::f64::consts::FRAC_PI_2) }
        }
        (None, Some(offset)) => cfg.angle_rule = AngleRule::PolarOffset { offset },
        (None, None) => {}
    }
    let base = SqueezedKernelParams::rbf(a.gamma)?;
    let data = io::load_dataset(&a.train)?;
    let test = load_test(&a.test)?;
    let out = qct_pipeline_with(&data, &base, &cfg, opts)?;
    if let Some(p) = &a.model_out {
        std::fs::write(p, out.stage2.to_json()?)?;
    }
    print_json(&serde_json::json!({
        "config": cfg,
        "stage1": model_summary(&out.stage1, &data, test.as_ref())?,
        "stage2": model_summary(&out.stage2, &data, test.as_ref())?,
        "angle_fallbacks": out.angle_fallbacks,
    }))
}

fn experiment(a: &Experiment, exec: Execution) -> sqk_core::Result<()> {
    let base: Option<ExperimentConfig> = a.config.as_deref().map(load_config).transpose()?;
    let missing = |f: &str| Error::Config(format!("--{f} is required without --config"));
    let methods = match (&base, a.method.as_slice()) {
        (_, [_, ..]) => a.method.clone(),
        (Some(b), []) => vec![b.method],
        (None, []) => return Err(missing("method")),
    };
    let task = a.task.or(base.as_ref().map(|b| b.task)).ok_or_else(|| missing("task"))?;
    let template = match task {
        TaskKind::Ring => ExperimentConfig::ring(methods[0], 40.0, 1),
        TaskKind::SquareCircle => ExperimentConfig::square_circle(methods[0], 40.0, 1),
        TaskKind::Hypotrochoid => ExperimentConfig::hypotrochoid(methods[0], 100.0, 1),
    };
    let mut cfg = base.unwrap_or(template);
    cfg.task = task;
    cfg.method = methods[0];
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.box_c {
        cfg.box_c = v;
    }
    if let Some(v) = a.n_seeds {
        cfg.n_seeds = v;
    }
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.n_train_per_class {
        cfg.n_train_per_class = v;
    }
    if let Some(v) = a.n_test {
        cfg.n_test_total = v;
    }
    if exec == Execution::Sequential {
        cfg.exec = exec;
    }
    let out = a.out.clone().or(cfg.output_path.clone().map(PathBuf::from));
    let results = run_comparison(&cfg, &methods)?;
    let mut summary = Vec::new();
    for r in &results {
        if let Some(p) = &out {
            let path = if results.len() == 1 {
                p.clone()
            } else {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
                p.with_file_name(format!("{stem}_{}.json", r.config.method.name()))
            };
            r.save(&path)?;
        }
        summary.push(serde_json::json!({
            "method": r.config.method,
            "mean": r.mean,
            "std": r.std,
            "mean_learned": r.mean_learned(),
            "wall_clock_secs": r.wall_clock_secs,
        }));
    }
    print_json(&serde_json::json!({ "task": cfg.task, "gamma": cfg.gamma, "n_seeds": cfg.n_seeds, "results": summary }))
}

fn boundary(a: &Boundary) -> sqk_core::Result<()> {
    let grid = GridSpec { xmin: a.xmin, xmax: a.xmax, ymin: a.ymin, ymax: a.ymax, steps: a.steps };
    grid.validate()?;
    match (&a.model, &a.learned, &a.train) {
        (Some(m), _, _) => {
            let model = SvmModel::from_json(&std::fs::read_to_string(m)?)?;
            export_boundary(&model, &grid, &a.out)?;
        }
        (None, Some(l), Some(t)) => {
            let learned: LearnedHyperparams = io::load_json(l)?;
            let clf = FidelityClassifier::new(&io::load_dataset(t)?, &learned.kernel_params())?;
            export_boundary(&clf, &grid, &a.out)?;
        }
        _ => return Err(Error::Config("boundary needs --model, or --learned with --train".into())),
    }
    print_json(&serde_json::json!({ "rows": a.steps * a.steps, "out": a.out }))
}

fn read_points(path: &Path) -> sqk_core::Result<Vec<Point2>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> sqk_core::Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidDataset(format!("{}: row {n}: bad coordinate", path.display())))
        };
        out.push(Point2::new(num(0)?, num(1)?));
    }
    Ok(out)
}

fn estimate(a: &Estimate, exec: Execution) -> sqk_core::Result<()> {
    let params = a.kernel.params()?;
    let points = read_points(&a.points)?;
    let pairs = io::read_pairs(std::fs::File::open(&a.pairs)?)?;
    let est = estimate_batch(exec, &points, &pairs, &params, a.shots, a.seed)?;
    io::write_estimates(std::fs::File::create(&a.out)?, &est)?;
    print_json(&serde_json::json!({ "pairs": est.len(), "shots": a.shots, "out": a.out }))
}

fn run(cli: &Cli) -> sqk_core::Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let opts = SvmOptions { exec, ..SvmOptions::default() };
    match &cli.cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a, &opts),
        Command::Learn(a) => learn(a, exec),
        Command::Qct(a) => qct(a, &opts),
        Command::Experiment(a) => experiment(a, exec),
        Command::Boundary(a) => boundary(a),
        Command::Estimate(a) => estimate(a, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
