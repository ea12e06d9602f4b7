//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqk_core::gaussian_optics::GramMatrix;
use sqk_core::Point2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point<R: Rng>(rng: &mut R, half: f64) -> Point2 {
    Point2::new(rng.random_range(-half..half), rng.random_range(-half..half))
}

/// Squeezed-vacuum Wigner function displaced to `(q0, p0)`, written directly
/// in rotated quadratures:
/// `W = exp(-e^{2r} X^2 - e^{-2r} P^2) / pi`.
pub fn wigner(q0: f64, p0: f64, r: f64, phi: f64) -> impl Fn(f64, f64) -> f64 {
    let (s, c) = phi.sin_cos();
    move |q, p| {
        let (dq, dp) = (q - q0, p - p0);
        let x = c * dq + s * dp;
        let pp = -s * dq + c * dp;
        (-(2.0 * r).exp() * x * x - (-2.0 * r).exp() * pp * pp).exp() / std::f64::consts::PI
    }
}

/// `2 pi * integral W_a W_b` by the trapezoid rule on a square grid around the
/// two means. The integrand is smooth and Gaussian-decaying, so the rule
/// converges exponentially in the node count.
pub fn wigner_overlap_quadrature(
    a: (f64, f64, f64, f64),
    b: (f64, f64, f64, f64),
    nodes: usize,
) -> f64 {
    let wa = wigner(a.0, a.1, a.2, a.3);
    let wb = wigner(b.0, b.1, b.2, b.3);
    // Widest standard deviation of either state is e^{r}/sqrt(2).
    let spread = a.2.max(b.2).exp() / std::f64::consts::SQRT_2;
    let pad = 9.0 * spread;
    let (qlo, qhi) = (a.0.min(b.0) - pad, a.0.max(b.0) + pad);
    let (plo, phi) = (a.1.min(b.1) - pad, a.1.max(b.1) + pad);
    let hq = (qhi - qlo) / (nodes - 1) as f64;
    let hp = (phi - plo) / (nodes - 1) as f64;
    let mut sum = 0.0;
    for i in 0..nodes {
        let q = qlo + hq * i as f64;
        let wq = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
        for j in 0..nodes {
            let p = plo + hp * j as f64;
            let wp = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
            sum += wq * wp * wa(q, p) * wb(q, p);
        }
    }
    2.0 * std::f64::consts::PI * sum * hq * hp
}

pub fn to_dmatrix(g: &GramMatrix) -> DMatrix<f64> {
    let n = g.len();
    DMatrix::from_fn(n, n, |i, j| g.get(i, j))
}

pub fn min_eigenvalue(g: &GramMatrix) -> f64 {
    SymmetricEigen::new(to_dmatrix(g)).eigenvalues.min()
}

pub struct QpOptimum {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
}

/// Exhaustive active-set solution of the soft-margin dual
/// `max sum(a) - 1/2 a' Q a, Q = yy' o K, y'a = 0, 0 <= a <= C`.
///
/// Every point is assigned to one of {at zero, free, at C}; for each of the
/// `3^n` assignments the stationarity system of the free block is solved
/// exactly. With `K` strictly positive definite the optimum is unique and is
/// the best feasible candidate.
pub fn brute_force_dual(k: &DMatrix<f64>, y: &[f64], c: f64) -> QpOptimum {
    let n = y.len();
    assert!(n <= 10, "brute force is exponential");
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let objective = |a: &[f64]| {
        let av = DVector::from_column_slice(a);
        av.sum() - 0.5 * (av.transpose() * &q * &av)[(0, 0)]
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut rem = code;
        for s in state.iter_mut() {
            *s = (rem % 3) as u8;
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 2 { c } else { 0.0 }).collect();
        if free.is_empty() {
            let bal: f64 = (0..n).map(|i| y[i] * alpha[i]).sum();
            if bal.abs() > 1e-9 * c.max(1.0) {
                continue;
            }
        } else {
            // [Q_FF  -y_F] [a_F]   [1 - Q_FC a_C]
            // [y_F'   0  ] [ l ] = [  -y_C' a_C ]
            let m = free.len();
            let mut sys = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (u, &i) in free.iter().enumerate() {
                for (v, &j) in free.iter().enumerate() {
                    sys[(u, v)] = q[(i, j)];
                }
                sys[(u, m)] = -y[i];
                sys[(m, u)] = y[i];
                rhs[u] = 1.0 - (0..n).filter(|&j| state[j] == 2).map(|j| q[(i, j)] * c).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 2).map(|j| y[j] * c).sum::<f64>();
            let Some(sol) = sys.lu().solve(&rhs) else { continue };
            let tol = 1e-10 * c.max(1.0);
            if free.iter().enumerate().any(|(u, _)| !(sol[u] > -tol && sol[u] < c + tol)) {
                continue;
            }
            for (u, &i) in free.iter().enumerate() {
                alpha[i] = sol[u].clamp(0.0, c);
            }
        }
        let w = objective(&alpha);
        if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
            best = Some((w, alpha));
        }
    }
    let (objective, alpha) = best.expect("alpha = 0 is always feasible");
    let bias = oracle_bias(k, y, &alpha, c);
    QpOptimum { alpha, objective, bias }
}

/// Bias from free multipliers; midpoint of the feasible interval otherwise.
pub fn oracle_bias(k: &DMatrix<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let f0 = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k[(i, j)]).sum::<f64>();
    let eps = 1e-6 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - f0(i)).sum::<f64>() / free.len() as f64;
    }
    // b must satisfy y_i (f0_i + b) >= 1 at zero multipliers and <= 1 at C.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let t = y[i] - f0(i);
        let at_zero = alpha[i] <= eps;
        if (at_zero && y[i] > 0.0) || (!at_zero && y[i] < 0.0) {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
    }
    0.5 * (lo + hi)
}

pub fn oracle_decision(k_row: &[f64], y: &[f64], alpha: &[f64], bias: f64) -> f64 {
    k_row.iter().zip(y).zip(alpha).map(|((k, y), a)| a * y * k).sum::<f64>() + bias
}
