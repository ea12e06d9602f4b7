//! Multi-seed experiment harness and decision-boundary export.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{self, TaskKind, TaskSpec};
use crate::exec::{self, Execution};
use crate::gaussian_optics::SqueezedKernelParams;
use crate::io::fmt_f64;
use crate::metric_learning::{learn_hyperparams, FidelityClassifier, LearnedHyperparams, Objective, SearchConfig};
use crate::point::Point2;
use crate::quasi_conformal::{qct_second_stage, QctConfig};
use crate::seed;
use crate::svm::{self, accuracy_of, KernelSpec, LabeledDataset, SvmModel, SvmOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RbfSvm,
    MetricLearnFidelity,
    MetricLearnSvm,
    QctSqueezed,
    QctRbf,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::RbfSvm, Method::MetricLearnFidelity, Method::MetricLearnSvm, Method::QctSqueezed, Method::QctRbf];

    pub fn name(self) -> &'static str {
        match self {
            Method::RbfSvm => "rbf_svm",
            Method::MetricLearnFidelity => "metric_learn_fidelity",
            Method::MetricLearnSvm => "metric_learn_svm",
            Method::QctSqueezed => "qct_squeezed",
            Method::QctRbf => "qct_rbf",
        }
    }

    pub fn supports(self, task: TaskKind) -> bool {
        match self {
            Method::RbfSvm => true,
            Method::MetricLearnFidelity | Method::MetricLearnSvm => task == TaskKind::Ring,
            Method::QctSqueezed | Method::QctRbf => task != TaskKind::Ring,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub n_train_per_class: usize,
    pub n_test_total: usize,
    pub method: Method,
    pub gamma: f64,
    #[serde(default = "default_box_c")]
    pub box_c: f64,
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qct: Option<QctConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default)]
    pub exec: Execution,
}

fn default_box_c() -> f64 {
    svm::DEFAULT_BOX_C
}

impl ExperimentConfig {
    /// Ring task with 20 points per class and 8 test points.
    pub fn ring(method: Method, gamma: f64, n_seeds: usize) -> Self {
        Self {
            task: TaskKind::Ring,
            n_train_per_class: 20,
            n_test_total: 8,
            method,
            gamma,
            box_c: svm::DEFAULT_BOX_C,
            n_seeds,
            master_seed: 0,
            qct: None,
            search: None,
            output_path: None,
            exec: Execution::default(),
        }
    }

    /// Hypotrochoid task with 20 points per class and 80 test points.
    pub fn hypotrochoid(method: Method, gamma: f64, n_seeds: usize) -> Self {
        Self { task: TaskKind::Hypotrochoid, n_test_total: 80, ..Self::ring(method, gamma, n_seeds) }
    }

    /// Square/circle task with 30 points per class and 80 test points.
    pub fn square_circle(method: Method, gamma: f64, n_seeds: usize) -> Self {
        Self { task: TaskKind::SquareCircle, n_train_per_class: 30, n_test_total: 80, ..Self::ring(method, gamma, n_seeds) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.box_c.is_finite() && self.box_c > 0.0) {
            return Err(Error::Config(format!("box_c must be positive, got {}", self.box_c)));
        }
        if !self.method.supports(self.task) {
            return Err(Error::Config(format!("method {} is not defined for task {:?}", self.method.name(), self.task)));
        }
        TaskSpec { task: self.task, n_train_per_class: self.n_train_per_class, n_test_total: self.n_test_total, seed: 0 }
            .validate()
    }

    /// Factor settings for the squeezed QCT variant; task defaults unless overridden.
    pub fn qct_squeezed(&self) -> QctConfig {
        let mut c = self.qct.unwrap_or(match self.task {
            // With h0 = 0 the factor vanishes in the square's corners, far from
            // every support vector, and the bias alone decides them there.
            TaskKind::SquareCircle => QctConfig { h0: 1.0, ..QctConfig::squeezed_aligned(0.4) },
            _ => QctConfig::squeezed_polar(0.5),
        });
        c.box_c = self.box_c;
        c
    }

    /// Factor settings for the RBF QCT variant: same factor, unsqueezed.
    pub fn qct_rbf(&self) -> QctConfig {
        let sq = self.qct_squeezed();
        QctConfig { r: 0.0, angle_rule: crate::quasi_conformal::AngleRule::None, ..sq }
    }

    pub fn seed_for(&self, index: usize) -> u64 {
        seed::derive(self.master_seed, index as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedSummary {
    pub r: f64,
    pub theta: f64,
    pub objective_value: f64,
    pub flat: bool,
}

impl From<&LearnedHyperparams> for LearnedSummary {
    fn from(l: &LearnedHyperparams) -> Self {
        Self { r: l.r, theta: l.theta, objective_value: l.objective_value, flat: l.flat }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub index: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub train_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_support: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned: Option<LearnedSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_fallbacks: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedRecord>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single seed).
    pub std: f64,
    pub wall_clock_secs: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.per_seed.iter().map(|s| s.accuracy).collect()
    }

    /// Mean learned `(r, theta)` over seeds, when the method learns them.
    pub fn mean_learned(&self) -> Option<(f64, f64)> {
        let l: Vec<_> = self.per_seed.iter().filter_map(|s| s.learned).collect();
        if l.is_empty() {
            return None;
        }
        let n = l.len() as f64;
        Some((l.iter().map(|s| s.r).sum::<f64>() / n, l.iter().map(|s| s.theta).sum::<f64>() / n))
    }

    pub fn write_seed_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "seed", "accuracy", "train_accuracy", "n_support", "r", "theta"])?;
        for s in &self.per_seed {
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            wr.write_record([
                s.index.to_string(),
                s.seed.to_string(),
                fmt_f64(s.accuracy),
                fmt_f64(s.train_accuracy),
                s.n_support.map(|n| n.to_string()).unwrap_or_default(),
                opt(s.learned.map(|l| l.r)),
                opt(s.learned.map(|l| l.theta)),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes the JSON document to `path` and the per-seed table next to it (`.csv`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::io::save_json(path, self)?;
        self.write_seed_csv(std::fs::File::create(path.with_extension("csv"))?)
    }
}

/// Memoized per-seed artifacts shared between methods.
struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    train: LabeledDataset,
    test: LabeledDataset,
    opts: SvmOptions,
    stage1: Option<SvmModel>,
    learned: Option<LearnedHyperparams>,
}

impl SeedContext<'_> {
    fn rbf_model(&mut self) -> Result<&SvmModel> {
        if self.stage1.is_none() {
            let k = KernelSpec::plain(SqueezedKernelParams::rbf(self.cfg.gamma)?);
            self.stage1 = Some(svm::train_with(&self.train, &k, self.cfg.box_c, &self.opts)?);
        }
        Ok(self.stage1.as_ref().expect("set above"))
    }

    fn learned(&mut self) -> Result<&LearnedHyperparams> {
        if self.learned.is_none() {
            let search = SearchConfig { exec: self.opts.exec, ..self.cfg.search.unwrap_or_default() };
            self.learned = Some(learn_hyperparams(&self.train, self.cfg.gamma, Objective::HilbertSchmidt, &search)?);
        }
        Ok(self.learned.as_ref().expect("set above"))
    }

    fn run(&mut self, method: Method, index: usize, seed: u64) -> Result<SeedRecord> {
        let mut rec = SeedRecord {
            index,
            seed,
            accuracy: 0.0,
            train_accuracy: 0.0,
            n_support: None,
            learned: None,
            angle_fallbacks: None,
        };
        let svm_scores = |m: &SvmModel, rec: &mut SeedRecord, train: &LabeledDataset, test: &LabeledDataset| -> Result<()> {
            rec.accuracy = m.accuracy(test)?;
            rec.train_accuracy = m.accuracy(train)?;
            rec.n_support = Some(m.n_support());
            Ok(())
        };
        match method {
            Method::RbfSvm => {
                let (train, test) = (self.train.clone(), self.test.clone());
                svm_scores(self.rbf_model()?, &mut rec, &train, &test)?;
            }
            Method::MetricLearnFidelity => {
                let learned = self.learned()?.clone();
                let clf = FidelityClassifier::new(&self.train, &learned.kernel_params())?;
                rec.accuracy = accuracy_of(|x| clf.predict(x), &self.test)?;
                rec.train_accuracy = accuracy_of(|x| clf.predict(x), &self.train)?;
                rec.learned = Some((&learned).into());
            }
            Method::MetricLearnSvm => {
                let learned = self.learned()?.clone();
                let k = KernelSpec::plain(learned.kernel_params());
                let m = svm::train_with(&self.train, &k, self.cfg.box_c, &self.opts)?;
                svm_scores(&m, &mut rec, &self.train, &self.test)?;
                rec.learned = Some((&learned).into());
            }
            Method::QctSqueezed | Method::QctRbf => {
                let qcfg = if method == Method::QctSqueezed { self.cfg.qct_squeezed() } else { self.cfg.qct_rbf() };
                let base = SqueezedKernelParams::rbf(self.cfg.gamma)?;
                let stage1 = self.rbf_model()?.clone();
                let out = qct_second_stage(&self.train, stage1, &base, &qcfg, &self.opts)?;
                svm_scores(&out.stage2, &mut rec, &self.train, &self.test)?;
                rec.angle_fallbacks = Some(out.angle_fallbacks.len());
            }
        }
        Ok(rec)
    }
}

/// Runs several methods over the same seeds. Data, the stage-1 RBF model and
/// learned hyperparameters are shared between methods within a seed.
pub fn run_comparison(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<ExperimentResult>> {
    for &m in methods {
        ExperimentConfig { method: m, ..cfg.clone() }.validate()?;
    }
    let start = Instant::now();
    let inner = if cfg.exec.is_parallel() { Execution::Sequential } else { cfg.exec };
    let per_seed: Vec<Vec<SeedRecord>> = exec::try_map_indexed(cfg.exec, cfg.n_seeds, |i| {
        let seed = cfg.seed_for(i);
        let wrap = |e: Error| Error::SeedFailure { index: i, seed, source: Box::new(e) };
        let spec = TaskSpec { task: cfg.task, n_train_per_class: cfg.n_train_per_class, n_test_total: cfg.n_test_total, seed };
        let (train, test) = datasets::generate(&spec).map_err(wrap)?;
        let mut ctx = SeedContext {
            cfg,
            train,
            test,
            opts: SvmOptions { exec: inner, ..Default::default() },
            stage1: None,
            learned: None,
        };
        methods.iter().map(|&m| ctx.run(m, i, seed).map_err(wrap)).collect::<Result<Vec<_>>>()
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let records: Vec<SeedRecord> = per_seed.iter().map(|row| row[k].clone()).collect();
            let (mean, std) = mean_std(&records.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            ExperimentResult {
                config: ExperimentConfig { method, ..cfg.clone() },
                per_seed: records,
                mean,
                std,
                wall_clock_secs: elapsed,
            }
        })
        .collect())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut out = run_comparison(cfg, &[cfg.method])?;
    Ok(out.remove(0))
}

/// Anything exposing a real-valued decision function.
pub trait DecisionFunction {
    fn decision_value(&self, x: Point2) -> f64;
}

impl DecisionFunction for SvmModel {
    fn decision_value(&self, x: Point2) -> f64 {
        SvmModel::decision_value(self, x)
    }
}

impl DecisionFunction for FidelityClassifier {
    fn decision_value(&self, x: Point2) -> f64 {
        FidelityClassifier::decision_value(self, x)
    }
}

impl<F: Fn(Point2) -> f64> DecisionFunction for F {
    fn decision_value(&self, x: Point2) -> f64 {
        self(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn square(half: f64, steps: usize) -> Self {
        Self { xmin: -half, xmax: half, ymin: -half, ymax: half, steps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config("grid needs at least 2 steps per axis".into()));
        }
        if !(self.xmax > self.xmin && self.ymax > self.ymin) {
            return Err(Error::Config("grid bounds must satisfy min < max".into()));
        }
        Ok(())
    }

    /// Node coordinates, `x1` varying fastest.
    pub fn nodes(&self) -> Vec<Point2> {
        let n = self.steps;
        let coord = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
        (0..n)
            .flat_map(|iy| (0..n).map(move |ix| Point2::new(coord(self.xmin, self.xmax, ix), coord(self.ymin, self.ymax, iy))))
            .collect()
    }
}

/// Decision values on the grid nodes as `(x, f(x))`.
pub fn boundary_grid<D: DecisionFunction + Sync>(f: &D, grid: &GridSpec, exec: Execution) -> Result<Vec<(Point2, f64)>> {
    grid.validate()?;
    let nodes = grid.nodes();
    let vals = exec::map_slice(exec, &nodes, |&x| f.decision_value(x));
    Ok(nodes.into_iter().zip(vals).collect())
}

pub fn write_boundary<W: Write>(w: W, rows: &[(Point2, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x1", "x2", "f"])?;
    for (p, v) in rows {
        wr.write_record([fmt_f64(p.x1), fmt_f64(p.x2), fmt_f64(*v)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `x1,x2,f` rows for external contouring at `f = 0`.
pub fn export_boundary<D: DecisionFunction + Sync>(f: &D, grid: &GridSpec, path: impl AsRef<Path>) -> Result<()> {
    let rows = boundary_grid(f, grid, Execution::default())?;
    write_boundary(std::fs::File::create(path)?, &rows)
}
