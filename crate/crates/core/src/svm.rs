//! Soft-margin kernel SVM on a precomputed Gram matrix.
//!
//! The dual
//!
//! ```text
//! min  1/2 a^T Q a - sum(a)    s.t.  0 <= a_i <= C,  y^T a = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! is solved by two-variable analytic updates on the maximally violating pair
//! (first-order working-set selection, ties to the lowest index), so a model
//! is a deterministic function of the dataset order.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::gaussian_optics::{encode_state, gaussian_overlap, gram_matrix_with, GaussianPureState, GramMatrix, SqueezedKernelParams};
use crate::point::Point2;
use crate::quasi_conformal::QFactorSpec;
use crate::{Error, Result};

/// Class label: `A` is `+1`, `B` is `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::A => 1.0,
            Label::B => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    /// Sign of a decision value, with `sign(0) = +1`.
    pub fn from_decision(v: f64) -> Label {
        if v >= 0.0 {
            Label::A
        } else {
            Label::B
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::A => 1,
            Label::B => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::A),
            -1 => Ok(Label::B),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<Point2>,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new(points: Vec<Point2>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidDataset(format!("point {i} is not finite")));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn class_points(&self, label: Label) -> Vec<Point2> {
        self.iter().filter(|&(_, l)| l == label).map(|(p, _)| p).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point2, Label)> + '_ {
        self.points.iter().copied().zip(self.labels.iter().copied())
    }

    pub fn push(&mut self, p: Point2, l: Label) {
        self.points.push(p);
        self.labels.push(l);
    }

    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    /// Both classes present and at least two points.
    pub fn require_trainable(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InvalidDataset("need at least two points".into()));
        }
        if self.count(Label::A) == 0 || self.count(Label::B) == 0 {
            return Err(Error::InvalidDataset("both classes must be present".into()));
        }
        Ok(())
    }

    pub fn with_flipped_labels(&self) -> Self {
        Self {
            points: self.points.clone(),
            labels: self.labels.iter().map(|l| l.flipped()).collect(),
        }
    }
}

/// Base squeezed kernel, optionally modified by a quasi-conformal factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base: SqueezedKernelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qfactor: Option<QFactorSpec>,
}

impl KernelSpec {
    pub fn plain(base: SqueezedKernelParams) -> Self {
        Self { base, qfactor: None }
    }

    pub fn with_qfactor(base: SqueezedKernelParams, q: QFactorSpec) -> Self {
        Self { base, qfactor: Some(q) }
    }

    pub fn eval(&self, x: Point2, y: Point2) -> f64 {
        let k = crate::gaussian_optics::kernel_exact(x, y, &self.base);
        match &self.qfactor {
            Some(q) => k * (q.eval(x) * q.eval(y)),
            None => k,
        }
    }

    pub fn gram(&self, exec: Execution, points: &[Point2]) -> GramMatrix {
        gram_matrix_with(exec, points, &self.base, self.qfactor.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub kkt_tol: f64,
    pub sv_threshold: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub exec: Execution,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-5, sv_threshold: 1e-8, max_iter: 10_000_000, exec: Execution::default() }
    }
}

/// Default box constraint: near hard margin.
pub const DEFAULT_BOX_C: f64 = 1000.0;

/// Raw solution of the dual problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Value of `1/2 a^T Q a - sum(a)`.
pub fn dual_objective(gram: &GramMatrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = gram.row(i);
        let mut s = 0.0;
        for j in 0..n {
            s += alpha[j] * y[j] * row[j];
        }
        quad += alpha[i] * y[i] * s;
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

fn gradient(gram: &GramMatrix, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    (0..n)
        .map(|i| {
            let row = gram.row(i);
            let s: f64 = (0..n).filter(|&j| alpha[j] != 0.0).map(|j| alpha[j] * y[j] * row[j]).sum();
            y[i] * s - 1.0
        })
        .collect()
}

#[inline]
fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y < 0.0 && a < c) || (y > 0.0 && a > 0.0)
}

/// Maximal violating pair `(i, m, j, M)` with `m = max_{up} -y G`, `M = min_{low} -y G`.
fn select_pair(g: &[f64], y: &[f64], alpha: &[f64], c: f64) -> (Option<usize>, f64, Option<usize>, f64) {
    let mut best_up = (None, f64::NEG_INFINITY);
    let mut best_low = (None, f64::INFINITY);
    for t in 0..g.len() {
        let v = -y[t] * g[t];
        if in_up(alpha[t], y[t], c) && v > best_up.1 {
            best_up = (Some(t), v);
        }
        if in_low(alpha[t], y[t], c) && v < best_low.1 {
            best_low = (Some(t), v);
        }
    }
    (best_up.0, best_up.1, best_low.0, best_low.1)
}

/// Solves the dual for a given Gram matrix and `+-1` labels.
pub fn solve_dual(gram: &GramMatrix, y: &[f64], c: f64, opts: &SvmOptions) -> Result<DualSolution> {
    let n = y.len();
    if gram.len() != n {
        return Err(Error::InvalidDataset("Gram size does not match labels".into()));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParams(format!("box constraint must be positive, got {c}")));
    }
    let eps = 0.1 * opts.kkt_tol;
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let mut iterations = 0;

    loop {
        let (i, m_up, j, m_low) = select_pair(&g, y, &alpha, c);
        let (Some(i), Some(j)) = (i, j) else { break };
        if m_up - m_low < eps {
            // Refresh the gradient to shed accumulated rounding before stopping.
            g = gradient(gram, y, &alpha);
            let (ri, rup, rj, rlow) = select_pair(&g, y, &alpha, c);
            if ri.is_none() || rj.is_none() || rup - rlow < eps {
                break;
            }
            continue;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NotConverged { iterations, max_residual: m_up - m_low });
        }
        iterations += 1;

        let eta = (gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j)).max(1e-12);
        let mut t = (m_up - m_low) / eta;
        let bound_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let bound_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let mut clip_i = false;
        let mut clip_j = false;
        if t >= bound_i {
            t = bound_i;
            clip_i = true;
        }
        if t >= bound_j {
            t = bound_j;
            clip_j = true;
            clip_i = clip_i && bound_i == bound_j;
        }
        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = if clip_i { if y[i] > 0.0 { c } else { 0.0 } } else { old_i + y[i] * t };
        alpha[j] = if clip_j { if y[j] > 0.0 { 0.0 } else { c } } else { old_j - y[j] * t };
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let (ri, rj) = (gram.row(i), gram.row(j));
        for k in 0..n {
            g[k] += y[k] * (y[i] * ri[k] * di + y[j] * rj[k] * dj);
        }
    }

    let bias = compute_bias(&g, y, &alpha, c);
    Ok(DualSolution { alpha, bias, iterations })
}

/// Mean of `-y G` over free variables, or the midpoint of the feasible interval.
fn compute_bias(g: &[f64], y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in 0..g.len() {
        let v = -y[t] * g[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += v;
            count += 1;
        } else if in_up(alpha[t], y[t], c) {
            lower = lower.max(v);
        } else if in_low(alpha[t], y[t], c) {
            upper = upper.min(v);
        }
    }
    if count > 0 {
        sum / count as f64
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    }
}

/// Largest violation of the KKT conditions expressed on the margins `y_i f(x_i)`.
pub fn kkt_residual(gram: &GramMatrix, y: &[f64], alpha: &[f64], bias: f64, c: f64, sv_threshold: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row = gram.row(i);
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * row[j]).sum::<f64>() + bias;
        let slack = y[i] * f - 1.0;
        let r = if alpha[i] <= sv_threshold {
            (-slack).max(0.0)
        } else if alpha[i] >= c - sv_threshold {
            slack.max(0.0)
        } else {
            slack.abs()
        };
        worst = worst.max(r);
    }
    worst
}

#[derive(Clone, Debug)]
struct SupportCache {
    idx: Vec<usize>,
    states: Vec<GaussianPureState>,
    /// `alpha_i y_i q(x_i)` (q = 1 without a factor).
    coef: Vec<f64>,
}

/// Trained binary classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvmModel {
    pub dual_weights: Vec<f64>,
    pub bias: f64,
    pub training: LabeledDataset,
    pub kernel: KernelSpec,
    pub box_c: f64,
    pub sv_threshold: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(skip)]
    cache: OnceLock<SupportCache>,
}

impl SvmModel {
    pub fn from_parts(
        dual_weights: Vec<f64>,
        bias: f64,
        training: LabeledDataset,
        kernel: KernelSpec,
        box_c: f64,
        sv_threshold: f64,
    ) -> Self {
        Self { dual_weights, bias, training, kernel, box_c, sv_threshold, iterations: 0, cache: OnceLock::new() }
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.dual_weights.len()).filter(|&i| self.dual_weights[i] > self.sv_threshold).collect()
    }

    pub fn support_vectors(&self) -> Vec<Point2> {
        self.support_indices().into_iter().map(|i| self.training.points[i]).collect()
    }

    fn cache(&self) -> &SupportCache {
        self.cache.get_or_init(|| {
            let idx = self.support_indices();
            let states = idx.iter().map(|&i| encode_state(self.training.points[i], &self.kernel.base)).collect();
            let coef = idx
                .iter()
                .map(|&i| {
                    let x = self.training.points[i];
                    let q = self.kernel.qfactor.as_ref().map_or(1.0, |q| q.eval(x));
                    self.dual_weights[i] * self.training.labels[i].sign() * q
                })
                .collect();
            SupportCache { idx, states, coef }
        })
    }

    /// `sum_i alpha_i y_i k(x, x_i) + b` over support vectors.
    pub fn decision_value(&self, x: Point2) -> f64 {
        let cache = self.cache();
        let sx = encode_state(x, &self.kernel.base);
        let mut s = 0.0;
        for (st, c) in cache.states.iter().zip(&cache.coef) {
            s += c * gaussian_overlap(&sx, st).expect("valid states");
        }
        if let Some(q) = &self.kernel.qfactor {
            s *= q.eval(x);
        }
        s + self.bias
    }

    pub fn predict(&self, x: Point2) -> Label {
        Label::from_decision(self.decision_value(x))
    }

    /// Fraction of correctly classified points; errors on an empty set.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        accuracy_of(|x| self.predict(x), data)
    }

    pub fn n_support(&self) -> usize {
        self.cache().idx.len()
    }

    /// KKT residual recomputed from scratch on the training set.
    pub fn kkt_residual(&self) -> f64 {
        let gram = self.kernel.gram(Execution::default(), &self.training.points);
        kkt_residual(&gram, &self.training.signs(), &self.dual_weights, self.bias, self.box_c, self.sv_threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn accuracy_of<F: Fn(Point2) -> Label>(classify: F, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("cannot score an empty evaluation set".into()));
    }
    let correct = data.iter().filter(|&(x, l)| classify(x) == l).count();
    Ok(correct as f64 / data.len() as f64)
}

pub fn train(data: &LabeledDataset, kernel: &KernelSpec, box_c: f64) -> Result<SvmModel> {
    train_with(data, kernel, box_c, &SvmOptions::default())
}

pub fn train_with(data: &LabeledDataset, kernel: &KernelSpec, box_c: f64, opts: &SvmOptions) -> Result<SvmModel> {
    data.require_trainable()?;
    kernel.base.validate()?;
    let gram = kernel.gram(opts.exec, &data.points);
    let y = data.signs();
    let sol = solve_dual(&gram, &y, box_c, opts)?;
    let mut model = SvmModel::from_parts(sol.alpha, sol.bias, data.clone(), kernel.clone(), box_c, opts.sv_threshold);
    model.iterations = sol.iterations;
    if model.n_support() == 0 {
        return Err(Error::NotConverged { iterations: sol.iterations, max_residual: f64::INFINITY });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x1: f64, x2: f64) -> Point2 {
        Point2::new(x1, x2)
    }

    fn rbf(gamma: f64) -> KernelSpec {
        KernelSpec::plain(SqueezedKernelParams::rbf(gamma).unwrap())
    }

    #[test]
    fn two_point_symmetry() {
        let data = LabeledDataset::new(vec![p(-0.3, 0.1), p(0.5, 0.4)], vec![Label::A, Label::B]).unwrap();
        let m = train(&data, &rbf(1.0), 1000.0).unwrap();
        assert_eq!(m.n_support(), 2);
        assert!((m.dual_weights[0] - m.dual_weights[1]).abs() < 1e-12);
        assert!(m.decision_value(p(0.1, 0.25)).abs() < 1e-10);
        assert!(m.decision_value(p(-0.3, 0.1)) > 0.0);
        assert!(m.decision_value(p(0.5, 0.4)) < 0.0);
        assert_eq!(m.accuracy(&data).unwrap(), 1.0);
        assert!(m.kkt_residual() <= 1e-5);
    }

    #[test]
    fn coincident_opposite_labels_hit_the_box() {
        let data = LabeledDataset::new(vec![p(0.2, 0.2), p(0.2, 0.2)], vec![Label::A, Label::B]).unwrap();
        let m = train(&data, &rbf(1.0), 5.0).unwrap();
        assert_eq!(m.dual_weights, vec![5.0, 5.0]);
    }

    #[test]
    fn xor_is_separable() {
        let pts = vec![p(1.0, 1.0), p(-1.0, -1.0), p(1.0, -1.0), p(-1.0, 1.0)];
        let labels = vec![Label::A, Label::A, Label::B, Label::B];
        let data = LabeledDataset::new(pts, labels).unwrap();
        let m = train(&data, &rbf(1.0), 1000.0).unwrap();
        assert_eq!(m.accuracy(&data).unwrap(), 1.0);
        assert!(m.kkt_residual() <= 1e-5);
    }

    #[test]
    fn empty_eval_set_is_an_error() {
        let data = LabeledDataset::new(vec![p(0.0, 0.0), p(1.0, 0.0)], vec![Label::A, Label::B]).unwrap();
        let m = train(&data, &rbf(1.0), 10.0).unwrap();
        assert!(m.accuracy(&LabeledDataset::default()).is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let data = LabeledDataset::new(vec![p(0.0, 0.0), p(1.0, 0.0)], vec![Label::A, Label::A]).unwrap();
        assert!(matches!(train(&data, &rbf(1.0), 10.0), Err(Error::InvalidDataset(_))));
        assert!(LabeledDataset::new(vec![p(0.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let pts: Vec<Point2> = (0..12).map(|i| p((i as f64).sin(), (i as f64 * 1.3).cos())).collect();
        let labels = (0..12).map(|i| if i % 2 == 0 { Label::A } else { Label::B }).collect();
        let data = LabeledDataset::new(pts, labels).unwrap();
        let opts = SvmOptions { max_iter: 1, ..Default::default() };
        match train_with(&data, &rbf(3.0), 1000.0, &opts) {
            Err(Error::NotConverged { iterations: 1, max_residual }) => assert!(max_residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_serde() {
        assert_eq!(serde_json::to_string(&Label::B).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Label>("1").unwrap(), Label::A);
        assert!(serde_json::from_str::<Label>("0").is_err());
    }
}
