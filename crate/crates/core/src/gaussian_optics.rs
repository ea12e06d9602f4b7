//! Single-mode Gaussian pure states and the kernels built from their overlaps.
//!
//! Quadratures use the vacuum-variance-1/2 convention, so every pure state
//! has `det(cov) = 1/4`. A data point `x` is encoded as a displaced squeezed
//! vacuum whose mean is `sqrt(gamma) * x`; the kernel variance `gamma` is thus
//! implemented by rescaling the data and never touches the covariance.

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::point::Point2;
use crate::quasi_conformal::QFactorSpec;
use crate::{Error, Result};

/// How each datum picks its squeezing angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnglePolicy {
    /// Shared angle `phi` for every point.
    Fixed { phi: f64 },
    /// Per-point angle `atan2(x2, x1) + theta`.
    PolarOffset { theta: f64 },
}

/// Hyperparameters of the squeezed kernel family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedKernelParams {
    pub gamma: f64,
    pub r: f64,
    pub angle: AnglePolicy,
}

impl SqueezedKernelParams {
    pub fn new(gamma: f64, r: f64, angle: AnglePolicy) -> Result<Self> {
        let p = Self { gamma, r, angle };
        p.validate()?;
        Ok(p)
    }

    /// Plain RBF kernel `exp(-gamma/2 |x-y|^2)`.
    pub fn rbf(gamma: f64) -> Result<Self> {
        Self::new(gamma, 0.0, AnglePolicy::Fixed { phi: 0.0 })
    }

    pub fn fixed(gamma: f64, r: f64, phi: f64) -> Result<Self> {
        Self::new(gamma, r, AnglePolicy::Fixed { phi })
    }

    pub fn polar_offset(gamma: f64, r: f64, theta: f64) -> Result<Self> {
        Self::new(gamma, r, AnglePolicy::PolarOffset { theta })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidParams(format!("r must be nonnegative, got {}", self.r)));
        }
        let angle = match self.angle {
            AnglePolicy::Fixed { phi } => phi,
            AnglePolicy::PolarOffset { theta } => theta,
        };
        if !angle.is_finite() {
            return Err(Error::InvalidParams("squeezing angle must be finite".into()));
        }
        Ok(())
    }

    /// Squeezing angle assigned to `x`.
    pub fn angle_for(&self, x: Point2) -> f64 {
        match self.angle {
            AnglePolicy::Fixed { phi } => phi,
            AnglePolicy::PolarOffset { theta } => x.polar_angle() + theta,
        }
    }
}

/// Real symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        (mean - rad, mean + rad)
    }
}

impl std::ops::Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

/// Covariance `R(phi) diag(e^{-2r}/2, e^{2r}/2) R(phi)^T`.
pub fn squeezed_covariance(r: f64, phi: f64) -> Sym2 {
    let lo = 0.5 * (-2.0 * r).exp();
    let hi = 0.5 * (2.0 * r).exp();
    let (s, c) = phi.sin_cos();
    Sym2::new(lo * c * c + hi * s * s, (lo - hi) * c * s, lo * s * s + hi * c * c)
}

/// Mean and covariance of a single-mode pure Gaussian state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPureState {
    pub mean: [f64; 2],
    pub cov: Sym2,
}

impl GaussianPureState {
    pub const VACUUM: GaussianPureState = GaussianPureState {
        mean: [0.0, 0.0],
        cov: Sym2::new(0.5, 0.0, 0.5),
    };

    /// Checks symmetry (by construction), positivity and purity.
    pub fn check_invariants(&self) -> Result<()> {
        let det = self.cov.det();
        if !(self.cov.xx > 0.0 && det > 0.0) {
            return Err(Error::InvalidParams("covariance is not positive definite".into()));
        }
        if (det - 0.25).abs() > 1e-10 {
            return Err(Error::InvalidParams(format!("state is not pure: det(cov) = {det}")));
        }
        Ok(())
    }
}

/// Feature map: `x -> |sqrt(gamma) x ; r e^{i phi(x)}>`.
pub fn encode_state(x: Point2, params: &SqueezedKernelParams) -> GaussianPureState {
    let s = params.gamma.sqrt();
    let phi = params.angle_for(x);
    GaussianPureState {
        mean: [s * x.x1, s * x.x2],
        cov: squeezed_covariance(params.r, phi),
    }
}

/// `|<a|b>|^2` for two pure Gaussian states:
/// `det(S)^{-1/2} exp(-1/2 d^T S^{-1} d)` with `S = cov_a + cov_b`, `d = mean_a - mean_b`.
pub fn gaussian_overlap(a: &GaussianPureState, b: &GaussianPureState) -> Result<f64> {
    if a == b {
        return Ok(1.0);
    }
    let s = a.cov + b.cov;
    let det = s.det();
    if !(det.is_finite() && det > 1e-300) {
        return Err(Error::SingularCovariance { det });
    }
    let dx = a.mean[0] - b.mean[0];
    let dy = a.mean[1] - b.mean[1];
    let quad = (s.yy * dx * dx - 2.0 * s.xy * dx * dy + s.xx * dy * dy) / det;
    Ok(((-0.5 * quad).exp() / det.sqrt()).min(1.0))
}

fn overlap_of_valid(a: &GaussianPureState, b: &GaussianPureState) -> f64 {
    gaussian_overlap(a, b).expect("pure-state covariance sums are nonsingular")
}

/// Squeezed kernel between two data points.
pub fn kernel_exact(x: Point2, y: Point2, params: &SqueezedKernelParams) -> f64 {
    overlap_of_valid(&encode_state(x, params), &encode_state(y, params))
}

/// Shared-angle squeezed kernel written directly in rotated coordinates,
/// `exp(-gamma/2 [e^{2r} X^2 + e^{-2r} P^2])`.
pub fn squeezed_kernel_closed_form(x: Point2, y: Point2, gamma: f64, r: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let d1 = x.x1 - y.x1;
    let d2 = x.x2 - y.x2;
    let xr = c * d1 + s * d2;
    let pr = -s * d1 + c * d2;
    (-0.5 * gamma * ((2.0 * r).exp() * xr * xr + (-2.0 * r).exp() * pr * pr)).exp()
}

/// Riemannian metric induced by a kernel at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTensor2 {
    pub g: Sym2,
}

/// Metric of the shared-angle squeezed kernel (data independent).
pub fn metric_tensor(params: &SqueezedKernelParams) -> Result<MetricTensor2> {
    let AnglePolicy::Fixed { phi } = params.angle else {
        return Err(Error::NotFixedAngle);
    };
    let (sh, ch) = ((2.0 * params.r).sinh(), (2.0 * params.r).cosh());
    let (s2, c2) = (2.0 * phi).sin_cos();
    let g = Sym2::new(sh * c2 + ch, sh * s2, ch - sh * c2).scale(params.gamma);
    Ok(MetricTensor2 { g })
}

/// `sqrt(det g)`.
pub fn magnification_factor(g: &MetricTensor2) -> Result<f64> {
    let det = g.g.det();
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant(det));
    }
    Ok(det.sqrt())
}

/// Principal axes of a metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrincipalAxes {
    /// `e1` is the major axis of the kernel's level-set ellipses, i.e. the
    /// eigenvector of the smaller metric eigenvalue; for the squeezed metric it
    /// is parallel to `(-tan phi, 1)`. `e2` is orthogonal, parallel to
    /// `(cot phi, 1)`. Both are unit vectors with a nonnegative second
    /// component (nonnegative first component when the second is zero).
    Anisotropic {
        e1: [f64; 2],
        e2: [f64; 2],
        lambda_min: f64,
        lambda_max: f64,
    },
    /// Degenerate eigenvalues; every direction is principal.
    Isotropic { lambda: f64 },
}

const AXIS_ZERO: f64 = 1e-12;

fn orient(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    let u = [v[0] / n, v[1] / n];
    let flip = if u[1].abs() <= AXIS_ZERO { u[0] < 0.0 } else { u[1] < 0.0 };
    if flip {
        [-u[0], -u[1]]
    } else {
        u
    }
}

/// Eigenvector of a symmetric 2x2 matrix for eigenvalue `lambda`, picking the
/// better conditioned of the two row-derived candidates.
fn eigenvector(m: &Sym2, lambda: f64) -> [f64; 2] {
    let a = [m.xy, lambda - m.xx];
    let b = [lambda - m.yy, m.xy];
    if a[0].hypot(a[1]) >= b[0].hypot(b[1]) {
        a
    } else {
        b
    }
}

pub fn principal_directions(g: &MetricTensor2) -> PrincipalAxes {
    let (lo, hi) = g.g.eigenvalues();
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    if (hi - lo) <= 1e-12 * scale {
        return PrincipalAxes::Isotropic { lambda: 0.5 * (lo + hi) };
    }
    let e1 = orient(eigenvector(&g.g, lo));
    let e2 = orient([-e1[1], e1[0]]);
    PrincipalAxes::Anisotropic { e1, e2, lambda_min: lo, lambda_max: hi }
}

/// Dense symmetric Gram matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn from_rows(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "Gram storage must be n*n");
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn gram_matrix(data: &[Point2], params: &SqueezedKernelParams, qfactor: Option<&QFactorSpec>) -> GramMatrix {
    gram_matrix_with(Execution::default(), data, params, qfactor)
}

/// Gram matrix with an explicit execution mode. Rows of the upper triangle
/// are computed independently and mirrored, so the result does not depend on
/// the mode.
pub fn gram_matrix_with(
    exec: Execution,
    data: &[Point2],
    params: &SqueezedKernelParams,
    qfactor: Option<&QFactorSpec>,
) -> GramMatrix {
    let n = data.len();
    let states = exec::map_slice(exec, data, |&x| encode_state(x, params));
    let q: Option<Vec<f64>> = qfactor.map(|spec| exec::map_slice(exec, data, |&x| spec.eval(x)));
    let upper = exec::map_indexed(exec, n, |i| {
        (i..n)
            .map(|j| {
                let k = overlap_of_valid(&states[i], &states[j]);
                match &q {
                    Some(q) => k * (q[i] * q[j]),
                    None => k,
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    GramMatrix { n, values }
}

/// Kernel matrix between two point sets (rows: `left`, columns: `right`).
pub fn cross_kernel(left: &[Point2], right: &[Point2], params: &SqueezedKernelParams) -> Vec<Vec<f64>> {
    let rs: Vec<_> = right.iter().map(|&y| encode_state(y, params)).collect();
    left.iter()
        .map(|&x| {
            let sx = encode_state(x, params);
            rs.iter().map(|sy| overlap_of_valid(&sx, sy)).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};

    fn p(x1: f64, x2: f64) -> Point2 {
        Point2::new(x1, x2)
    }

    #[test]
    fn vacuum_at_origin() {
        for phi in [0.0, 1.0, 4.0] {
            let s = encode_state(Point2::ORIGIN, &SqueezedKernelParams::fixed(1.0, 0.0, phi).unwrap());
            assert_eq!(s.mean, [0.0, 0.0]);
            assert!((s.cov.xx - 0.5).abs() < 1e-15 && s.cov.xy.abs() < 1e-15 && (s.cov.yy - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn squeezed_state_along_q() {
        let s = encode_state(p(1.0, 0.0), &SqueezedKernelParams::fixed(1.0, 0.5, 0.0).unwrap());
        assert_eq!(s.mean, [1.0, 0.0]);
        assert!((s.cov.xx - (-1.0f64).exp() / 2.0).abs() < 1e-15);
        assert!((s.cov.yy - E / 2.0).abs() < 1e-15);
        assert_eq!(s.cov.xy, 0.0);
        s.check_invariants().unwrap();
    }

    #[test]
    fn gamma_rescales_mean_only() {
        let s = encode_state(p(1.0, 1.0), &SqueezedKernelParams::fixed(4.0, 0.0, 0.0).unwrap());
        assert_eq!(s.mean, [2.0, 2.0]);
        assert_eq!(s.cov, Sym2::new(0.5, 0.0, 0.5));
    }

    #[test]
    fn overlap_examples() {
        let params = SqueezedKernelParams::fixed(1.0, 0.5, 0.0).unwrap();
        let a = encode_state(p(1.0, 0.0), &params);
        let b = encode_state(p(0.0, 0.0), &params);
        assert_eq!(gaussian_overlap(&a, &a).unwrap(), 1.0);
        let expected = (-E / 2.0).exp();
        assert!((gaussian_overlap(&a, &b).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.2569).abs() < 1e-4);

        let rbf = SqueezedKernelParams::rbf(1.0).unwrap();
        let d = 1.7;
        let k = kernel_exact(p(0.3, -0.2), p(0.3 + d, -0.2), &rbf);
        assert!((k - (-d * d / 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn singular_sum_is_rejected() {
        let bad = GaussianPureState { mean: [0.0, 0.0], cov: Sym2::new(0.0, 0.0, 0.0) };
        let other = GaussianPureState { mean: [1.0, 0.0], cov: Sym2::new(0.0, 0.0, 0.0) };
        assert!(matches!(gaussian_overlap(&bad, &other), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn rbf_special_case() {
        let gamma = 40.0;
        let params = SqueezedKernelParams::fixed(gamma, 0.0, 1.234).unwrap();
        let x = p(0.1, 0.4);
        let y = p(-0.2, 0.25);
        let d2 = (x.x1 - y.x1).powi(2) + (x.x2 - y.x2).powi(2);
        assert!((kernel_exact(x, y, &params) - (-gamma / 2.0 * d2).exp()).abs() < 1e-14);
        assert_eq!(kernel_exact(x, x, &params), 1.0);
    }

    #[test]
    fn metric_examples() {
        let g = metric_tensor(&SqueezedKernelParams::fixed(3.0, 0.0, 0.7).unwrap()).unwrap();
        assert!((g.g.xx - 3.0).abs() < 1e-14 && g.g.xy.abs() < 1e-14 && (g.g.yy - 3.0).abs() < 1e-14);
        let g = metric_tensor(&SqueezedKernelParams::fixed(2.0, 0.5, 0.0).unwrap()).unwrap();
        assert!((g.g.xx - 2.0 * E).abs() < 1e-13);
        assert!((g.g.yy - 2.0 / E).abs() < 1e-13);
        assert_eq!(g.g.xy, 0.0);
        assert!(matches!(
            metric_tensor(&SqueezedKernelParams::polar_offset(1.0, 0.3, 0.0).unwrap()),
            Err(Error::NotFixedAngle)
        ));
    }

    #[test]
    fn magnification_examples() {
        let iso = MetricTensor2 { g: Sym2::new(5.0, 0.0, 5.0) };
        assert!((magnification_factor(&iso).unwrap() - 5.0).abs() < 1e-14);
        let d = MetricTensor2 { g: Sym2::new(4.0, 0.0, 9.0) };
        assert!((magnification_factor(&d).unwrap() - 6.0).abs() < 1e-14);
        let sq = metric_tensor(&SqueezedKernelParams::fixed(7.0, 1.3, 2.1).unwrap()).unwrap();
        assert!((magnification_factor(&sq).unwrap() - 7.0).abs() < 1e-10);
        let bad = MetricTensor2 { g: Sym2::new(1.0, 2.0, 1.0) };
        assert!(matches!(magnification_factor(&bad), Err(Error::NonPositiveDeterminant(_))));
    }

    #[test]
    fn principal_direction_examples() {
        let g = metric_tensor(&SqueezedKernelParams::fixed(1.0, 0.4, FRAC_PI_4).unwrap()).unwrap();
        let PrincipalAxes::Anisotropic { e1, e2, .. } = principal_directions(&g) else { panic!("expected anisotropy") };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e1[0] + h).abs() < 1e-12 && (e1[1] - h).abs() < 1e-12);
        assert!((e2[0] - h).abs() < 1e-12 && (e2[1] - h).abs() < 1e-12);

        let g = metric_tensor(&SqueezedKernelParams::fixed(1.0, 0.4, FRAC_PI_2).unwrap()).unwrap();
        let PrincipalAxes::Anisotropic { e1, e2, .. } = principal_directions(&g) else { panic!("expected anisotropy") };
        assert!((e1[0] - 1.0).abs() < 1e-12 && e1[1].abs() < 1e-12);
        assert!(e2[0].abs() < 1e-12 && (e2[1] - 1.0).abs() < 1e-12);

        let g = metric_tensor(&SqueezedKernelParams::fixed(2.0, 0.0, 1.0).unwrap()).unwrap();
        assert!(matches!(principal_directions(&g), PrincipalAxes::Isotropic { lambda } if (lambda - 2.0).abs() < 1e-12));
    }

    #[test]
    fn principal_axis_is_level_set_major_axis() {
        // Moving along e1 must decay the kernel slowest.
        let params = SqueezedKernelParams::fixed(5.0, 0.6, 0.9).unwrap();
        let g = metric_tensor(&params).unwrap();
        let PrincipalAxes::Anisotropic { e1, e2, .. } = principal_directions(&g) else { panic!() };
        let t = 0.2;
        let k1 = kernel_exact(Point2::ORIGIN, p(t * e1[0], t * e1[1]), &params);
        let k2 = kernel_exact(Point2::ORIGIN, p(t * e2[0], t * e2[1]), &params);
        assert!(k1 > k2);
    }

    #[test]
    fn small_grams() {
        let params = SqueezedKernelParams::rbf(10.0).unwrap();
        let g = gram_matrix(&[p(0.2, 0.3)], &params, None);
        assert_eq!(g.as_slice(), &[1.0]);
        let g = gram_matrix(&[p(0.2, 0.3), p(0.2, 0.3)], &params, None);
        assert_eq!(g.as_slice(), &[1.0; 4]);
    }

    #[test]
    fn gram_modes_bit_identical() {
        let pts: Vec<Point2> = (0..37).map(|i| p((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos())).collect();
        let params = SqueezedKernelParams::polar_offset(12.0, 0.7, 0.1).unwrap();
        let a = gram_matrix_with(Execution::Sequential, &pts, &params, None);
        let b = gram_matrix_with(Execution::Parallel, &pts, &params, None);
        assert_eq!(a, b);
        for i in 0..pts.len() {
            assert_eq!(a.get(i, i), 1.0);
        }
    }

    #[test]
    fn polar_offset_origin_uses_theta() {
        let params = SqueezedKernelParams::polar_offset(1.0, 0.5, 0.3).unwrap();
        assert_eq!(params.angle_for(Point2::ORIGIN), 0.3);
        assert!((params.angle_for(p(0.0, 2.0)) - (FRAC_PI_2 + 0.3)).abs() < 1e-15);
        assert!((params.angle_for(p(-1.0, 0.0)) - (PI + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn invalid_params() {
        assert!(SqueezedKernelParams::rbf(0.0).is_err());
        assert!(SqueezedKernelParams::fixed(1.0, -0.1, 0.0).is_err());
        assert!(SqueezedKernelParams::fixed(1.0, 0.1, f64::NAN).is_err());
    }
}
