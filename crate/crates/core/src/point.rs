use serde::{Deserialize, Serialize};

/// A point in the 2D input space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x1: f64,
    pub x2: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (*self - other).norm()
    }

    /// Polar angle, with the origin mapped to 0.
    pub fn polar_angle(&self) -> f64 {
        if self.x1 == 0.0 && self.x2 == 0.0 {
            0.0
        } else {
            self.x2.atan2(self.x1)
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x1 * s, self.x2 * s)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x1, x2): (f64, f64)) -> Self {
        Point2::new(x1, x2)
    }
}
