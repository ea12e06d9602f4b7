//! Class-ensemble statistics of the quantum feature map and the kernel
//! learning objectives built on them.
//!
//! For pure-state encodings `Tr(rho_x rho_y) = k(x, y)`, so every trace of
//! class-averaged density operators is a block mean of the Gram matrix.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::gaussian_optics::{encode_state, gaussian_overlap, gram_matrix_with, GaussianPureState, GramMatrix, SqueezedKernelParams};
use crate::point::Point2;
use crate::simplex::{self, NelderMeadConfig};
use crate::svm::{Label, LabeledDataset};
use crate::{Error, Result};

/// `Tr rho_A^2`, `Tr rho_B^2`, `Tr rho_A rho_B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub purity_a: f64,
    pub purity_b: f64,
    pub overlap_ab: f64,
}

impl EnsembleStats {
    /// Block means of a Gram matrix over the two classes.
    pub fn from_gram(gram: &GramMatrix, labels: &[Label]) -> Result<Self> {
        let n_a = labels.iter().filter(|&&l| l == Label::A).count();
        let n_b = labels.len() - n_a;
        if n_a == 0 || n_b == 0 {
            return Err(Error::InvalidDataset("both classes must be nonempty".into()));
        }
        let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
        for i in 0..labels.len() {
            let row = gram.row(i);
            for j in 0..labels.len() {
                match (labels[i], labels[j]) {
                    (Label::A, Label::A) => aa += row[j],
                    (Label::B, Label::B) => bb += row[j],
                    (Label::A, Label::B) => ab += row[j],
                    (Label::B, Label::A) => {}
                }
            }
        }
        let (na, nb) = (n_a as f64, n_b as f64);
        Ok(Self { purity_a: aa / (na * na), purity_b: bb / (nb * nb), overlap_ab: ab / (na * nb) })
    }

    pub fn swapped(&self) -> Self {
        Self { purity_a: self.purity_b, purity_b: self.purity_a, overlap_ab: self.overlap_ab }
    }
}

pub fn ensemble_stats(data: &LabeledDataset, params: &SqueezedKernelParams) -> Result<EnsembleStats> {
    ensemble_stats_with(Execution::default(), data, params)
}

pub fn ensemble_stats_with(exec: Execution, data: &LabeledDataset, params: &SqueezedKernelParams) -> Result<EnsembleStats> {
    let gram = gram_matrix_with(exec, &data.points, params, None);
    EnsembleStats::from_gram(&gram, &data.labels)
}

/// Traces of the total, within-class and between-class scatter matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterTraces {
    pub total: f64,
    pub within: f64,
    pub between: f64,
    /// Closed form `3/4 (P_A + P_B) - 1/2 O - 1`, only for balanced classes.
    pub between_compact: Option<f64>,
}

pub fn scatter_traces(data: &LabeledDataset, params: &SqueezedKernelParams) -> Result<ScatterTraces> {
    let gram = gram_matrix_with(Execution::default(), &data.points, params, None);
    let stats = EnsembleStats::from_gram(&gram, &data.labels)?;
    let total = 1.0 - gram.mean();
    let within = 2.0 - stats.purity_a - stats.purity_b;
    let between = total - within;
    let balanced = data.count(Label::A) == data.count(Label::B);
    let between_compact =
        balanced.then_some(0.75 * (stats.purity_a + stats.purity_b) - 0.5 * stats.overlap_ab - 1.0);
    Ok(ScatterTraces { total, within, between, between_compact })
}

const EPS_DIV: f64 = 1e-12;

/// `(1 - O) / (2 (2 - P_A - P_B)) - 3/4`.
pub fn fisher_score(stats: &EnsembleStats) -> Result<f64> {
    let denom = 2.0 - stats.purity_a - stats.purity_b;
    if !(denom > EPS_DIV) {
        return Err(Error::DegenerateFisher);
    }
    Ok((1.0 - stats.overlap_ab) / (2.0 * denom) - 0.75)
}

/// `P_A + P_B - 2 O`, with rounding noise just below zero clipped.
pub fn hs_distance(stats: &EnsembleStats) -> f64 {
    let d = stats.purity_a + stats.purity_b - 2.0 * stats.overlap_ab;
    if (-1e-12..0.0).contains(&d) {
        0.0
    } else {
        d
    }
}

/// Nearest-class-mean classifier in feature space.
#[derive(Clone, Debug)]
pub struct FidelityClassifier {
    params: SqueezedKernelParams,
    class_a: Vec<GaussianPureState>,
    class_b: Vec<GaussianPureState>,
}

impl FidelityClassifier {
    pub fn new(train: &LabeledDataset, params: &SqueezedKernelParams) -> Result<Self> {
        let enc = |l| -> Vec<_> { train.class_points(l).iter().map(|&x| encode_state(x, params)).collect() };
        let (class_a, class_b) = (enc(Label::A), enc(Label::B));
        if class_a.is_empty() || class_b.is_empty() {
            return Err(Error::InvalidDataset("both classes must be nonempty".into()));
        }
        Ok(Self { params: *params, class_a, class_b })
    }

    /// `Tr[rho_x (rho_A - rho_B)]`.
    pub fn decision_value(&self, x: Point2) -> f64 {
        let sx = encode_state(x, &self.params);
        let mean = |states: &[GaussianPureState]| {
            states.iter().map(|s| gaussian_overlap(&sx, s).expect("valid states")).sum::<f64>() / states.len() as f64
        };
        mean(&self.class_a) - mean(&self.class_b)
    }

    pub fn predict(&self, x: Point2) -> Label {
        Label::from_decision(self.decision_value(x))
    }
}

pub fn fidelity_classify(train: &LabeledDataset, params: &SqueezedKernelParams, x: Point2) -> Result<Label> {
    Ok(FidelityClassifier::new(train, params)?.predict(x))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    HilbertSchmidt,
    Fisher,
}

impl Objective {
    /// `None` where the objective is undefined (degenerate Fisher denominator).
    pub fn evaluate(self, stats: &EnsembleStats) -> Option<f64> {
        match self {
            Objective::HilbertSchmidt => Some(hs_distance(stats)),
            Objective::Fisher => fisher_score(stats).ok(),
        }
    }
}

/// Grid over `(r, theta)` followed by simplex refinement from the best cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub r_step: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
    pub max_iter: usize,
    pub f_tol: f64,
    #[serde(default)]
    pub exec: Execution,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            r_min: 0.0,
            r_max: 2.0,
            r_step: 0.1,
            theta_min: -FRAC_PI_2,
            theta_max: FRAC_PI_2,
            theta_step: PI / 36.0,
            max_iter: 200,
            f_tol: 1e-8,
            exec: Execution::default(),
        }
    }
}

impl SearchConfig {
    fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        let n = ((max - min) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| min + k as f64 * step).collect()
    }

    pub fn r_grid(&self) -> Vec<f64> {
        Self::axis(self.r_min, self.r_max, self.r_step)
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        Self::axis(self.theta_min, self.theta_max, self.theta_step)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.r_min >= 0.0
            && self.r_max >= self.r_min
            && self.r_step > 0.0
            && self.theta_max >= self.theta_min
            && self.theta_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams("malformed search grid".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub r: f64,
    pub theta: f64,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedHyperparams {
    pub r: f64,
    pub theta: f64,
    pub gamma: f64,
    pub objective: Objective,
    pub objective_value: f64,
    /// Objective constant over the grid; the grid minimum was returned unrefined.
    pub flat: bool,
    pub refine_iterations: usize,
    pub trace: Vec<Candidate>,
}

impl LearnedHyperparams {
    pub fn kernel_params(&self) -> SqueezedKernelParams {
        SqueezedKernelParams { gamma: self.gamma, r: self.r, angle: crate::AnglePolicy::PolarOffset { theta: self.theta } }
    }
}

/// Maps an angle into `(-pi/2, pi/2]`; the squeezing ellipse has period pi.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

fn objective_at(train: &LabeledDataset, gamma: f64, objective: Objective, r: f64, theta: f64) -> Option<f64> {
    let params = SqueezedKernelParams::polar_offset(gamma, r, theta).ok()?;
    let stats = ensemble_stats_with(Execution::Sequential, train, &params).ok()?;
    objective.evaluate(&stats)
}

/// Learns `(r, theta)` of the polar-offset squeezed kernel by maximizing `objective`.
pub fn learn_hyperparams(train: &LabeledDataset, gamma: f64, objective: Objective, search: &SearchConfig) -> Result<LearnedHyperparams> {
    search.validate()?;
    SqueezedKernelParams::rbf(gamma)?;
    if train.count(Label::A) == 0 || train.count(Label::B) == 0 {
        return Err(Error::InvalidDataset("both classes must be nonempty".into()));
    }
    let rs = search.r_grid();
    let thetas = search.theta_grid();
    let cells: Vec<(f64, f64)> = rs.iter().flat_map(|&r| thetas.iter().map(move |&t| (r, t))).collect();
    let values = exec::map_slice(search.exec, &cells, |&(r, t)| objective_at(train, gamma, objective, r, t));
    let mut trace: Vec<Candidate> =
        cells.iter().zip(&values).map(|(&(r, theta), &value)| Candidate { r, theta, value }).collect();

    // Strict comparison keeps the lexicographically first (r, theta) on ties.
    let mut best: Option<(usize, f64)> = None;
    let mut lowest = f64::INFINITY;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            lowest = lowest.min(v);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let Some((best_idx, best_val)) = best else {
        return Err(Error::DegenerateFisher);
    };

    let flat_tol = 1e-14 * best_val.abs().max(1.0);
    if best_val - lowest <= flat_tol && values.iter().all(Option::is_some) {
        let (r, theta) = cells[0];
        return Ok(LearnedHyperparams {
            r,
            theta,
            gamma,
            objective,
            objective_value: values[0].unwrap_or(best_val),
            flat: true,
            refine_iterations: 0,
            trace,
        });
    }

    let (r0, t0) = cells[best_idx];
    let (r_lo, r_hi) = (search.r_min, search.r_max);
    let mut refine_trace = Vec::new();
    let res = simplex::minimize(
        |x: &[f64; 2]| {
            let r = x[0].clamp(r_lo, r_hi);
            let v = objective_at(train, gamma, objective, r, x[1]);
            refine_trace.push(Candidate { r, theta: x[1], value: v });
            v.map_or(f64::INFINITY, |v| -v)
        },
        [r0, t0],
        [search.r_step, search.theta_step],
        &NelderMeadConfig { max_iter: search.max_iter, f_tol: search.f_tol, ..Default::default() },
    );
    trace.extend(refine_trace);

    let (mut r, mut theta) = (res.x[0].clamp(r_lo, r_hi), wrap_half_turn(res.x[1]));
    let mut value = objective_at(train, gamma, objective, r, theta);
    if value.is_none_or(|v| v < best_val) {
        r = r0;
        theta = wrap_half_turn(t0);
        value = objective_at(train, gamma, objective, r, theta);
    }
    Ok(LearnedHyperparams {
        r,
        theta,
        gamma,
        objective,
        objective_value: value.unwrap_or(best_val),
        flat: false,
        refine_iterations: res.iterations,
        trace,
    })
}
