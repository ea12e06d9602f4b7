//! Seeded synthetic 2D classification tasks.
//!
//! Points are drawn uniformly from an ambient box and labelled by region;
//! draws landing in a class whose quota is already filled (or outside every
//! region) are rejected.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::point::Point2;
use crate::svm::{Label, LabeledDataset};
use crate::{Error, Result};

pub const RING_INNER: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
pub const RING_OUTER: f64 = 0.816_496_580_927_726; // sqrt(2/3)
pub const SQUARE_HALF_EXTENT: f64 = 0.8;
pub const CIRCLE_RADIUS: f64 = RING_INNER;
pub const CURVE_SAMPLES: usize = 4096;
pub const MAX_DRAWS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Ring,
    SquareCircle,
    Hypotrochoid,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(TaskKind::Ring),
            "square_circle" | "square-circle" => Ok(TaskKind::SquareCircle),
            "hypotrochoid" => Ok(TaskKind::Hypotrochoid),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub n_train_per_class: usize,
    pub n_test_total: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_per_class == 0 || self.n_test_total == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hypotrochoid with `r = d`, `R / r = 1.5` as a closed polyline over
/// `theta in [0, 4 pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypotrochoid {
    pub big_r: f64,
    pub small_r: f64,
    pub d: f64,
    vertices: Vec<Point2>,
}

impl Hypotrochoid {
    pub fn new(big_r: f64, small_r: f64, d: f64) -> Result<Self> {
        let shape_ok = small_r > 0.0 && (small_r - d).abs() <= 1e-12 && (big_r / small_r - 1.5).abs() <= 1e-12;
        if !shape_ok {
            return Err(Error::InvalidParams(format!(
                "hypotrochoid needs r = d and R/r = 1.5 (got R={big_r}, r={small_r}, d={d})"
            )));
        }
        let k = (big_r - small_r) / small_r;
        let vertices = (0..CURVE_SAMPLES)
            .map(|i| {
                let t = 4.0 * std::f64::consts::PI * i as f64 / CURVE_SAMPLES as f64;
                Point2::new(
                    (big_r - small_r) * t.cos() + d * (k * t).cos(),
                    (big_r - small_r) * t.sin() - d * (k * t).sin(),
                )
            })
            .collect();
        Ok(Self { big_r, small_r, d, vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Even–odd crossing test against the polyline.
    pub fn contains(&self, p: Point2) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.x2 > p.x2) != (b.x2 > p.x2) && p.x1 < (b.x1 - a.x1) * (p.x2 - a.x2) / (b.x2 - a.x2) + a.x1 {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Shoelace area of the polyline.
    pub fn polygon_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let twice: f64 = (0..n).map(|i| v[i].x1 * v[(i + 1) % n].x2 - v[(i + 1) % n].x1 * v[i].x2).sum();
        0.5 * twice.abs()
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&Point2) -> f64| {
            self.vertices.iter().map(pick).fold(init, f)
        };
        (
            Point2::new(fold(f64::min, f64::INFINITY, |p| p.x1), fold(f64::min, f64::INFINITY, |p| p.x2)),
            Point2::new(fold(f64::max, f64::NEG_INFINITY, |p| p.x1), fold(f64::max, f64::NEG_INFINITY, |p| p.x2)),
        )
    }
}

pub fn hypotrochoid_contains(big_r: f64, small_r: f64, d: f64, x: Point2) -> Result<bool> {
    Ok(Hypotrochoid::new(big_r, small_r, d)?.contains(x))
}

/// Class-A region boundary of the hypotrochoid task.
pub fn inner_curve() -> &'static Hypotrochoid {
    static C: OnceLock<Hypotrochoid> = OnceLock::new();
    C.get_or_init(|| Hypotrochoid::new(0.15, 0.1, 0.1).expect("valid curve"))
}

/// Outer limit of class B in the hypotrochoid task.
pub fn outer_curve() -> &'static Hypotrochoid {
    static C: OnceLock<Hypotrochoid> = OnceLock::new();
    C.get_or_init(|| Hypotrochoid::new(0.36, 0.24, 0.24).expect("valid curve"))
}

impl TaskKind {
    /// Sampling box `(min, max)`.
    pub fn ambient_box(self) -> (Point2, Point2) {
        match self {
            TaskKind::Ring => (Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0)),
            TaskKind::SquareCircle => (
                Point2::new(-SQUARE_HALF_EXTENT, -SQUARE_HALF_EXTENT),
                Point2::new(SQUARE_HALF_EXTENT, SQUARE_HALF_EXTENT),
            ),
            TaskKind::Hypotrochoid => outer_curve().bounding_box(),
        }
    }

    /// Ground-truth label, `None` outside every region.
    pub fn membership(self, x: Point2) -> Option<Label> {
        let (lo, hi) = self.ambient_box();
        if x.x1 < lo.x1 || x.x1 > hi.x1 || x.x2 < lo.x2 || x.x2 > hi.x2 {
            return None;
        }
        match self {
            TaskKind::Ring => {
                let r = x.norm();
                Some(if (RING_INNER..=RING_OUTER).contains(&r) { Label::A } else { Label::B })
            }
            TaskKind::SquareCircle => Some(if x.norm() < CIRCLE_RADIUS { Label::B } else { Label::A }),
            TaskKind::Hypotrochoid => {
                if inner_curve().contains(x) {
                    Some(Label::A)
                } else if outer_curve().contains(x) {
                    Some(Label::B)
                } else {
                    None
                }
            }
        }
    }
}

fn sample_set<R: Rng>(rng: &mut R, task: TaskKind, n_a: usize, n_b: usize) -> Result<LabeledDataset> {
    let (lo, hi) = task.ambient_box();
    let mut out = LabeledDataset::default();
    let (mut need_a, mut need_b) = (n_a, n_b);
    let mut draws = 0u64;
    while need_a + need_b > 0 {
        if draws >= MAX_DRAWS {
            return Err(Error::RejectionLimit(MAX_DRAWS));
        }
        draws += 1;
        let x = Point2::new(rng.random_range(lo.x1..hi.x1), rng.random_range(lo.x2..hi.x2));
        match task.membership(x) {
            Some(Label::A) if need_a > 0 => {
                need_a -= 1;
                out.push(x, Label::A);
            }
            Some(Label::B) if need_b > 0 => {
                need_b -= 1;
                out.push(x, Label::B);
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Balanced training set and test set (`ceil(n/2)` A, `floor(n/2)` B).
pub fn generate(spec: &TaskSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_train_per_class;
    let train = sample_set(&mut rng, spec.task, n, n)?;
    let t = spec.n_test_total;
    let test = sample_set(&mut rng, spec.task, t.div_ceil(2), t / 2)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_counts_and_labels() {
        let spec = TaskSpec { task: TaskKind::Ring, n_train_per_class: 20, n_test_total: 8, seed: 5 };
        let (train, test) = generate(&spec).unwrap();
        assert_eq!((train.len(), test.len()), (40, 8));
        assert_eq!(train.count(Label::A), 20);
        assert_eq!(test.count(Label::A), 4);
        for (x, l) in train.iter().chain(test.iter()) {
            assert!(x.x1.abs() <= 1.0 && x.x2.abs() <= 1.0);
            let r = x.norm();
            assert_eq!(l == Label::A, (RING_INNER..=RING_OUTER).contains(&r));
        }
    }

    #[test]
    fn hypotrochoid_split_and_odd_test_size() {
        let spec = TaskSpec { task: TaskKind::Hypotrochoid, n_train_per_class: 20, n_test_total: 81, seed: 1 };
        let (train, test) = generate(&spec).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!((test.count(Label::A), test.count(Label::B)), (41, 40));
        for (x, l) in train.iter().chain(test.iter()) {
            assert!(outer_curve().contains(x));
            assert_eq!(TaskKind::Hypotrochoid.membership(x), Some(l));
        }
    }

    #[test]
    fn square_circle_regions() {
        let spec = TaskSpec { task: TaskKind::SquareCircle, n_train_per_class: 30, n_test_total: 40, seed: 2 };
        let (train, _) = generate(&spec).unwrap();
        for (x, l) in train.iter() {
            assert!(x.x1.abs() <= 0.8 && x.x2.abs() <= 0.8);
            assert_eq!(l == Label::B, x.norm() < CIRCLE_RADIUS);
        }
    }

    #[test]
    fn deterministic() {
        let spec = TaskSpec { task: TaskKind::Ring, n_train_per_class: 10, n_test_total: 10, seed: 77 };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = TaskSpec { seed: 78, ..spec };
        assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn curve_membership_examples() {
        assert!(hypotrochoid_contains(0.15, 0.1, 0.1, Point2::ORIGIN).unwrap());
        assert!(!hypotrochoid_contains(0.15, 0.1, 0.1, Point2::new(10.0, 10.0)).unwrap());
        assert!(hypotrochoid_contains(0.15, 0.2, 0.1, Point2::ORIGIN).is_err());
    }

    #[test]
    fn monte_carlo_area_matches_shoelace() {
        let curve = inner_curve();
        let (lo, hi) = curve.bounding_box();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| curve.contains(Point2::new(rng.random_range(lo.x1..hi.x1), rng.random_range(lo.x2..hi.x2))))
            .count();
        let area = hits as f64 / n as f64 * (hi.x1 - lo.x1) * (hi.x2 - lo.x2);
        let shoelace = curve.polygon_area();
        assert!((area - shoelace).abs() / shoelace < 0.01, "{area} vs {shoelace}");
    }

    #[test]
    fn zero_counts_rejected() {
        let spec = TaskSpec { task: TaskKind::Ring, n_train_per_class: 0, n_test_total: 8, seed: 0 };
        assert!(generate(&spec).is_err());
    }
}
