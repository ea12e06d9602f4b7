//! Quasi-conformal kernel refinement `k~(x, y) = q(x) q(y) k(x, y)`.
//!
//! `q` is a constant offset plus a weighted sum of squeezed kernels centred on
//! the support vectors of a first SVM run. The two-stage pipeline trains the
//! first SVM, builds `q` from its support vectors and retrains on the modified
//! kernel.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::gaussian_optics::{kernel_exact, metric_tensor, squeezed_covariance, MetricTensor2, SqueezedKernelParams, Sym2};
use crate::point::Point2;
use crate::svm::{self, KernelSpec, LabeledDataset, SvmModel, SvmOptions};
use crate::{Error, Result};

/// Squeezing of one factor centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSqueezing {
    pub r: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFactorSpec {
    pub h0: f64,
    pub centers: Vec<Point2>,
    pub weights: Vec<f64>,
    pub gamma_prime: f64,
    pub squeezings: Vec<CenterSqueezing>,
}

impl QFactorSpec {
    pub fn new(
        h0: f64,
        centers: Vec<Point2>,
        weights: Vec<f64>,
        gamma_prime: f64,
        squeezings: Vec<CenterSqueezing>,
    ) -> Result<Self> {
        let spec = Self { h0, centers, weights, gamma_prime, squeezings };
        spec.validate()?;
        Ok(spec)
    }

    /// `q == 1`: leaves any kernel unchanged.
    pub fn identity() -> Self {
        Self { h0: 1.0, centers: vec![], weights: vec![], gamma_prime: 1.0, squeezings: vec![] }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.centers.len();
        if self.weights.len() != m || self.squeezings.len() != m {
            return Err(Error::InvalidParams("centers, weights and squeezings must have equal length".into()));
        }
        if !(self.h0.is_finite() && self.h0 >= 0.0) {
            return Err(Error::InvalidParams(format!("h0 must be nonnegative, got {}", self.h0)));
        }
        if self.h0 == 0.0 && m == 0 {
            return Err(Error::InvalidParams("h0 = 0 requires at least one center".into()));
        }
        if self.weights.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::InvalidParams("center weights must be positive".into()));
        }
        if !(self.gamma_prime.is_finite() && self.gamma_prime > 0.0) {
            return Err(Error::InvalidParams("gamma' must be positive".into()));
        }
        if self.squeezings.iter().any(|s| !(s.r.is_finite() && s.r >= 0.0 && s.phi.is_finite())) {
            return Err(Error::InvalidParams("center squeezings must be finite with r >= 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Kernel parameters of centre `j`.
    pub fn center_params(&self, j: usize) -> SqueezedKernelParams {
        let s = self.squeezings[j];
        SqueezedKernelParams { gamma: self.gamma_prime, r: s.r, angle: crate::AnglePolicy::Fixed { phi: s.phi } }
    }

    /// `q(x) = h0 + sum_j h_j k_{gamma', zeta_j}(c_j, x)`.
    pub fn eval(&self, x: Point2) -> f64 {
        let mut q = self.h0;
        for j in 0..self.centers.len() {
            q += self.weights[j] * kernel_exact(self.centers[j], x, &self.center_params(j));
        }
        q
    }

    /// Analytic gradient of `q`. With `A_j = R diag(e^{2r}, e^{-2r}) R^T`,
    /// each term contributes `-gamma' h_j k_j A_j (x - c_j)`.
    pub fn gradient(&self, x: Point2) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for j in 0..self.centers.len() {
            let k = kernel_exact(self.centers[j], x, &self.center_params(j));
            let s = self.squeezings[j];
            // squeezed_covariance(-r, phi) = A / 2
            let a = squeezed_covariance(-s.r, s.phi).scale(2.0);
            let d = x - self.centers[j];
            let w = -self.gamma_prime * self.weights[j] * k;
            g[0] += w * (a.xx * d.x1 + a.xy * d.x2);
            g[1] += w * (a.xy * d.x1 + a.yy * d.x2);
        }
        g
    }
}

/// `q(x)` for a factor spec.
pub fn q_factor(spec: &QFactorSpec, x: Point2) -> f64 {
    spec.eval(x)
}

pub fn modified_kernel(spec: &QFactorSpec, params: &SqueezedKernelParams, x: Point2, y: Point2) -> f64 {
    kernel_exact(x, y, params) * (spec.eval(x) * spec.eval(y))
}

/// `g~ = grad q grad q^T + q^2 g`.
pub fn modified_metric(spec: &QFactorSpec, params: &SqueezedKernelParams, x: Point2) -> Result<MetricTensor2> {
    let g = metric_tensor(params)?.g;
    let q = spec.eval(x);
    let dq = spec.gradient(x);
    let q2 = q * q;
    Ok(MetricTensor2 {
        g: Sym2::new(dq[0] * dq[0] + q2 * g.xx, dq[0] * dq[1] + q2 * g.xy, dq[1] * dq[1] + q2 * g.yy),
    })
}

/// Numerical settings for boundary search on a decision function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySearch {
    pub grad_step: f64,
    pub bisect_tol: f64,
    pub value_tol: f64,
    pub radius: f64,
    pub march_step: f64,
    pub radial_directions: usize,
    /// Gradient norms below this at the boundary count as vanishing.
    #[serde(default = "default_grad_floor")]
    pub grad_floor: f64,
}

fn default_grad_floor() -> f64 {
    1e-6
}

impl Default for BoundarySearch {
    fn default() -> Self {
        Self {
            grad_step: 1e-4,
            bisect_tol: 1e-8,
            value_tol: 1e-6,
            radius: 1.0,
            march_step: 1.0 / 256.0,
            radial_directions: 64,
            grad_floor: default_grad_floor(),
        }
    }
}

fn central_gradient<F: Fn(Point2) -> f64>(f: &F, x: Point2, h: f64) -> [f64; 2] {
    let dx = (f(Point2::new(x.x1 + h, x.x2)) - f(Point2::new(x.x1 - h, x.x2))) / (2.0 * h);
    let dy = (f(Point2::new(x.x1, x.x2 + h)) - f(Point2::new(x.x1, x.x2 - h))) / (2.0 * h);
    [dx, dy]
}

/// First sign change of `f` along `x0 + t u`, `t in (0, radius]`, refined by bisection.
fn march<F: Fn(Point2) -> f64>(f: &F, x0: Point2, f0: f64, u: [f64; 2], cfg: &BoundarySearch) -> Option<Point2> {
    let at = |t: f64| Point2::new(x0.x1 + t * u[0], x0.x2 + t * u[1]);
    let steps = (cfg.radius / cfg.march_step).ceil() as usize;
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    for k in 1..=steps {
        let t = (k as f64 * cfg.march_step).min(cfg.radius);
        let ft = f(at(t));
        if ft == 0.0 {
            return Some(at(t));
        }
        if (ft > 0.0) != (f_prev > 0.0) {
            let (mut lo, mut hi, mut flo) = (t_prev, t, f_prev);
            loop {
                let mid = 0.5 * (lo + hi);
                let fm = f(at(mid));
                let converged = hi - lo <= cfg.bisect_tol && fm.abs() < cfg.value_tol;
                if converged || hi - lo <= 1e-15 || fm == 0.0 {
                    return Some(at(mid));
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
        }
        t_prev = t;
        f_prev = ft;
    }
    None
}

/// Closest point on `{f = 0}` found from `x0`: march along `+-grad f`, falling
/// back to a radial scan when neither ray brackets a sign change.
pub fn nearest_zero<F: Fn(Point2) -> f64>(f: &F, x0: Point2, cfg: &BoundarySearch) -> Result<Point2> {
    let f0 = f(x0);
    if f0.abs() < cfg.value_tol {
        return Ok(x0);
    }
    let closest = |cands: Vec<Point2>| {
        cands.into_iter().min_by(|a, b| a.dist(x0).total_cmp(&b.dist(x0)))
    };
    let g = central_gradient(f, x0, cfg.grad_step);
    let gn = g[0].hypot(g[1]);
    if gn > 0.0 && gn.is_finite() {
        let u = [g[0] / gn, g[1] / gn];
        let cands: Vec<Point2> = [u, [-u[0], -u[1]]].into_iter().filter_map(|d| march(f, x0, f0, d, cfg)).collect();
        if let Some(best) = closest(cands) {
            return Ok(best);
        }
    }
    let n = cfg.radial_directions;
    let cands: Vec<Point2> = (0..n)
        .filter_map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            march(f, x0, f0, [a.cos(), a.sin()], cfg)
        })
        .collect();
    closest(cands).ok_or(Error::NoBoundary { x1: x0.x1, x2: x0.x2 })
}

/// Nearest point on the decision boundary `f(x) = 0` of a trained model.
pub fn nearest_boundary_point(model: &SvmModel, x0: Point2) -> Result<Point2> {
    nearest_zero(&|x| model.decision_value(x), x0, &BoundarySearch::default())
}

/// Angle of `grad f` at the boundary point nearest `x_s`.
pub fn alignment_angle<F: Fn(Point2) -> f64>(f: &F, x_s: Point2, cfg: &BoundarySearch) -> Result<f64> {
    let xb = nearest_zero(f, x_s, cfg)?;
    let g = central_gradient(f, xb, cfg.grad_step);
    if !(g[0].hypot(g[1]) > cfg.grad_floor) {
        return Err(Error::VanishingGradient);
    }
    Ok(g[1].atan2(g[0]))
}

/// Squeezing angle whose major axis follows the boundary tangent near `x_s`.
pub fn boundary_alignment_angle(model: &SvmModel, x_s: Point2) -> Result<f64> {
    alignment_angle(&|x| model.decision_value(x), x_s, &BoundarySearch::default())
}

/// `atan2(x2, x1) + pi/2` (origin maps to `pi/2`).
pub fn polar_offset_angle(x_s: Point2) -> f64 {
    x_s.polar_angle() + FRAC_PI_2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleRule {
    /// Align with the stage-1 boundary; falls back to `PolarOffset(pi/2)` per centre on failure.
    BoundaryAligned,
    PolarOffset { offset: f64 },
    /// Unsqueezed RBF factors (`r` forced to 0).
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QctConfig {
    pub gamma_ratio: f64,
    pub r: f64,
    pub h0: f64,
    #[serde(default = "unit_weight")]
    pub center_weight: f64,
    pub angle_rule: AngleRule,
    pub box_c: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl QctConfig {
    /// Squeezed factors with `phi_j = polar + pi/2`.
    pub fn squeezed_polar(r: f64) -> Self {
        Self {
            gamma_ratio: 4.0,
            r,
            h0: 0.0,
            center_weight: 1.0,
            angle_rule: AngleRule::PolarOffset { offset: FRAC_PI_2 },
            box_c: svm::DEFAULT_BOX_C,
        }
    }

    pub fn squeezed_aligned(r: f64) -> Self {
        Self { angle_rule: AngleRule::BoundaryAligned, ..Self::squeezed_polar(r) }
    }

    /// RBF factors.
    pub fn rbf() -> Self {
        Self { r: 0.0, angle_rule: AngleRule::None, ..Self::squeezed_polar(0.0) }
    }
}

impl Default for QctConfig {
    fn default() -> Self {
        Self::squeezed_polar(0.5)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QctOutcome {
    pub stage1: SvmModel,
    pub stage2: SvmModel,
    pub qfactor: QFactorSpec,
    /// Centres whose boundary alignment failed and used the polar-offset rule.
    pub angle_fallbacks: Vec<usize>,
}

/// Builds the factor from `stage1`'s support vectors according to `cfg`.
pub fn build_qfactor(stage1: &SvmModel, base: &SqueezedKernelParams, cfg: &QctConfig, exec: Execution) -> Result<(QFactorSpec, Vec<usize>)> {
    let centers = stage1.support_vectors();
    let angles: Vec<(f64, bool)> = match cfg.angle_rule {
        AngleRule::None => vec![(0.0, false); centers.len()],
        AngleRule::PolarOffset { offset } => centers.iter().map(|c| (c.polar_angle() + offset, false)).collect(),
        AngleRule::BoundaryAligned => exec::map_slice(exec, &centers, |&c| match boundary_alignment_angle(stage1, c) {
            Ok(phi) => (phi, false),
            Err(_) => (polar_offset_angle(c), true),
        }),
    };
    let r = if cfg.angle_rule == AngleRule::None { 0.0 } else { cfg.r };
    let fallbacks = angles.iter().enumerate().filter(|(_, a)| a.1).map(|(i, _)| i).collect();
    let spec = QFactorSpec::new(
        cfg.h0,
        centers.clone(),
        vec![cfg.center_weight; centers.len()],
        cfg.gamma_ratio * base.gamma,
        angles.iter().map(|&(phi, _)| CenterSqueezing { r, phi }).collect(),
    )?;
    Ok((spec, fallbacks))
}

/// Stage 1 on `base`, stage 2 on `base` modified by the support-vector factor.
pub fn qct_pipeline(train: &LabeledDataset, base: &SqueezedKernelParams, cfg: &QctConfig) -> Result<QctOutcome> {
    qct_pipeline_with(train, base, cfg, &SvmOptions::default())
}

pub fn qct_pipeline_with(train: &LabeledDataset, base: &SqueezedKernelParams, cfg: &QctConfig, opts: &SvmOptions) -> Result<QctOutcome> {
    if !(cfg.gamma_ratio.is_finite() && cfg.gamma_ratio > 0.0) {
        return Err(Error::InvalidParams("gamma ratio must be positive".into()));
    }
    let stage1 = svm::train_with(train, &KernelSpec::plain(*base), cfg.box_c, opts)?;
    qct_second_stage(train, stage1, base, cfg, opts)
}

/// Stage 2 only, reusing an existing stage-1 model.
pub fn qct_second_stage(
    train: &LabeledDataset,
    stage1: SvmModel,
    base: &SqueezedKernelParams,
    cfg: &QctConfig,
    opts: &SvmOptions,
) -> Result<QctOutcome> {
    let (qfactor, angle_fallbacks) = build_qfactor(&stage1, base, cfg, opts.exec)?;
    let stage2 = svm::train_with(train, &KernelSpec::with_qfactor(*base, qfactor.clone()), cfg.box_c, opts)?;
    Ok(QctOutcome { stage1, stage2, qfactor, angle_fallbacks })
}
