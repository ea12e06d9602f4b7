//! Nelder–Mead simplex minimizer for small, fixed-dimension problems.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Stop when `f(worst) - f(best)` falls below this.
    pub f_tol: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_iter: 200, f_tol: 1e-8, alpha: 1.0, gamma: 2.0, rho: 0.5, sigma: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult<const D: usize> {
    pub x: [f64; D],
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn sort<const D: usize>(s: &mut [([f64; D], f64)]) {
    // Stable: equal values keep their order, so runs are reproducible.
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
}

fn lerp<const D: usize>(a: &[f64; D], b: &[f64; D], t: f64) -> [f64; D] {
    let mut out = [0.0; D];
    for k in 0..D {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
    out
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge `step[k]`.
pub fn minimize<const D: usize, F>(mut f: F, x0: [f64; D], step: [f64; D], cfg: &NelderMeadConfig) -> NelderMeadResult<D>
where
    F: FnMut(&[f64; D]) -> f64,
{
    let mut evals = 0;
    let mut eval = |x: &[f64; D]| {
        evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    simplex.push((x0, eval(&x0)));
    for k in 0..D {
        let mut x = x0;
        x[k] += step[k];
        let v = eval(&x);
        simplex.push((x, v));
    }
    sort(&mut simplex);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        if simplex[D].1 - simplex[0].1 < cfg.f_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; D];
        for (x, _) in &simplex[..D] {
            for k in 0..D {
                centroid[k] += x[k] / D as f64;
            }
        }
        let worst = simplex[D];
        let reflected = lerp(&centroid, &worst.0, -cfg.alpha);
        let fr = eval(&reflected);

        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst.0, -cfg.gamma);
            let fe = eval(&expanded);
            simplex[D] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (reflected, fr);
        } else {
            let (target, ft) = if fr < worst.1 { (reflected, fr) } else { worst };
            let contracted = lerp(&centroid, &target, cfg.rho);
            let fc = eval(&contracted);
            if fc < ft {
                simplex[D] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &v.0, cfg.sigma);
                    *v = (x, eval(&x));
                }
            }
        }
        sort(&mut simplex);
    }
    if !converged && simplex[D].1 - simplex[0].1 < cfg.f_tol {
        converged = true;
    }
    let (x, fx) = simplex[0];
    NelderMeadResult { x, f: fx, iterations, evaluations: evals, converged }
}
