//! Shot-level simulation of the zero-photon kernel estimators.
//!
//! The probability of detecting vacuum at the output of the inversion-test
//! circuit equals the kernel value, so a run of `M` shots is `M` Bernoulli
//! trials with that success probability. Quasi-conformal factors are sampled
//! as a mixture: each shot first picks a centre with probability `h_j / H`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::gaussian_optics::{encode_state, gaussian_overlap, kernel_exact, GaussianPureState, SqueezedKernelParams};
use crate::point::Point2;
use crate::quasi_conformal::QFactorSpec;
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub shots: u64,
    pub seed: u64,
}

impl ShotConfig {
    pub fn new(shots: u64, seed: u64) -> Result<Self> {
        let cfg = Self { shots, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidParams("shots must be at least 1; use the exact kernel for noiseless values".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn bernoulli_count<R: Rng>(rng: &mut R, p: f64, shots: u64) -> u64 {
    if p >= 1.0 {
        return shots;
    }
    if p <= 0.0 {
        return 0;
    }
    (0..shots).filter(|_| rng.random_bool(p)).count() as u64
}

/// Fraction of vacuum outcomes over `cfg.shots` runs of the inversion test.
pub fn estimate_kernel(x: Point2, y: Point2, params: &SqueezedKernelParams, cfg: &ShotConfig) -> Result<f64> {
    cfg.validate()?;
    params.validate()?;
    let p = kernel_exact(x, y, params);
    let hits = bernoulli_count(&mut cfg.rng(), p, cfg.shots);
    Ok(hits as f64 / cfg.shots as f64)
}

/// Mixture estimate of `q(x)` for a factor without constant offset:
/// `H * (vacuum fraction)` with `H = sum_j h_j`.
pub fn estimate_q_factor(spec: &QFactorSpec, x: Point2, cfg: &ShotConfig) -> Result<f64> {
    cfg.validate()?;
    spec.validate()?;
    if spec.h0 != 0.0 {
        return Err(Error::InvalidParams("constant offset h0 must be added classically, not sampled".into()));
    }
    if spec.is_empty() {
        return Err(Error::InvalidParams("mixture estimate needs at least one center".into()));
    }
    let total: f64 = spec.weights.iter().sum();
    let probs: Vec<f64> = (0..spec.len()).map(|j| kernel_exact(spec.centers[j], x, &spec.center_params(j))).collect();
    let cumulative: Vec<f64> = spec
        .weights
        .iter()
        .scan(0.0, |acc, &h| {
            *acc += h / total;
            Some(*acc)
        })
        .collect();
    let mut rng = cfg.rng();
    let mut hits = 0u64;
    for _ in 0..cfg.shots {
        let u: f64 = rng.random();
        let j = cumulative.iter().position(|&c| u < c).unwrap_or(spec.len() - 1);
        if rng.random_bool(probs[j].clamp(0.0, 1.0)) {
            hits += 1;
        }
    }
    Ok(total * hits as f64 / cfg.shots as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub i: usize,
    pub j: usize,
    pub estimate: f64,
    pub shots: u64,
}

/// Estimates `k(points[i], points[j])` for each pair. Pair `n` is sampled with
/// seed `derive(master_seed, n)`, so results do not depend on scheduling.
pub fn estimate_batch(
    exec: Execution,
    points: &[Point2],
    pairs: &[(usize, usize)],
    params: &SqueezedKernelParams,
    shots: u64,
    master_seed: u64,
) -> Result<Vec<KernelEstimate>> {
    ShotConfig::new(shots, master_seed)?;
    params.validate()?;
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= points.len() || j >= points.len()) {
        return Err(Error::InvalidParams(format!("pair ({i}, {j}) out of range for {} points", points.len())));
    }
    let states: Vec<GaussianPureState> = points.iter().map(|&x| encode_state(x, params)).collect();
    let out = exec::map_indexed(exec, pairs.len(), |n| {
        let (i, j) = pairs[n];
        let p = gaussian_overlap(&states[i], &states[j]).expect("valid states");
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, n as u64));
        let hits = bernoulli_count(&mut rng, p, shots);
        KernelEstimate { i, j, estimate: hits as f64 / shots as f64, shots }
    });
    Ok(out)
}
