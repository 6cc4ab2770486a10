//! Image-plane points, apical views and the three LV landmarks.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A subpixel position in image coordinates. `x` runs along columns and
/// `y` along rows; pixel `(r, c)` has its center at `(c, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Z component of the 3D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Rotates by `angle` radians about `center` (counter-clockwise in a
    /// y-up frame, clockwise on screen).
    pub fn rotate_about(self, center: Point, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        let d = self - center;
        center + Point::new(c * d.x - s * d.y, s * d.x + c * d.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    A4C,
    A2C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    ED,
    ES,
}

impl View {
    pub const ALL: [View; 2] = [View::A4C, View::A2C];
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::ED, Phase::ES];
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::A4C => "A4C",
            View::A2C => "A2C",
        })
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::ED => "ED",
            Phase::ES => "ES",
        })
    }
}

/// Every (view, phase) pair in canonical order.
pub const VIEW_PHASES: [(View, Phase); 4] = [
    (View::A4C, Phase::ED),
    (View::A4C, Phase::ES),
    (View::A2C, Phase::ED),
    (View::A2C, Phase::ES),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LandmarkError {
    #[error("mitral annulus endpoints coincide at ({x}, {y})")]
    CoincidentAnnulus { x: f64, y: f64 },
    #[error("apex lies on the mitral annulus segment")]
    ApexOnAnnulus,
    #[error("landmark {name} = ({x}, {y}) is outside the {w}x{h} grid")]
    OutOfGrid {
        name: &'static str,
        x: f64,
        y: f64,
        w: usize,
        h: usize,
    },
    #[error("landmark {0} is not finite")]
    NonFinite(&'static str),
}

/// Apex `P_A` and the mitral annulus endpoints `P_L`, `P_R`.
///
/// Heatmap channels and prompt tokens follow the order apex, left, right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    apex: Point,
    left: Point,
    right: Point,
}

impl Landmarks {
    pub const NAMES: [&'static str; 3] = ["P_A", "P_L", "P_R"];

    pub fn new(apex: Point, left: Point, right: Point) -> Result<Self, LandmarkError> {
        for (name, p) in Self::NAMES.iter().zip([apex, left, right]) {
            if !p.is_finite() {
                return Err(LandmarkError::NonFinite(name));
            }
        }
        if left == right {
            return Err(LandmarkError::CoincidentAnnulus {
                x: left.x,
                y: left.y,
            });
        }
        let seg = right - left;
        let rel = apex - left;
        let t = rel.dot(seg) / seg.dot(seg);
        let off_line = rel.cross(seg).abs() / seg.norm();
        if off_line < 1e-9 && (0.0..=1.0).contains(&t) {
            return Err(LandmarkError::ApexOnAnnulus);
        }
        Ok(Self { apex, left, right })
    }

    /// Builds the landmarks and checks they lie inside a `h x w` grid.
    pub fn in_grid(
        apex: Point,
        left: Point,
        right: Point,
        (h, w): (usize, usize),
    ) -> Result<Self, LandmarkError> {
        let lm = Self::new(apex, left, right)?;
        lm.check_in_grid((h, w))?;
        Ok(lm)
    }

    pub fn check_in_grid(&self, (h, w): (usize, usize)) -> Result<(), LandmarkError> {
        for (name, p) in Self::NAMES.iter().zip(self.points()) {
            if !(p.x >= 0.0 && p.x < w as f64 && p.y >= 0.0 && p.y < h as f64) {
                return Err(LandmarkError::OutOfGrid {
                    name,
                    x: p.x,
                    y: p.y,
                    w,
                    h,
                });
            }
        }
        Ok(())
    }

    pub fn apex(&self) -> Point {
        self.apex
    }

    pub fn left(&self) -> Point {
        self.left
    }

    pub fn right(&self) -> Point {
        self.right
    }

    /// `[P_A, P_L, P_R]`.
    pub fn points(&self) -> [Point; 3] {
        [self.apex, self.left, self.right]
    }

    pub fn from_points(points: [Point; 3]) -> Result<Self, LandmarkError> {
        Self::new(points[0], points[1], points[2])
    }

    /// Applies `f` to every point and re-validates.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self, LandmarkError> {
        Self::new(f(self.apex), f(self.left), f(self.right))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coincident_annulus() {
        let p = Point::new(0.0, 0.0);
        assert!(matches!(
            Landmarks::new(Point::new(5.0, 5.0), p, p),
            Err(LandmarkError::CoincidentAnnulus { .. })
        ));
    }

    #[test]
    fn rejects_apex_on_annulus() {
        let r = Landmarks::new(
            Point::new(15.0, 20.0),
            Point::new(10.0, 20.0),
            Point::new(30.0, 20.0),
        );
        assert_eq!(r, Err(LandmarkError::ApexOnAnnulus));
        // Collinear but beyond the segment is allowed.
        assert!(Landmarks::new(
            Point::new(40.0, 20.0),
            Point::new(10.0, 20.0),
            Point::new(30.0, 20.0)
        )
        .is_ok());
    }

    #[test]
    fn grid_bounds_are_half_open() {
        let lm = Landmarks::new(
            Point::new(5.0, 0.0),
            Point::new(0.0, 15.9),
            Point::new(15.9, 15.9),
        )
        .unwrap();
        assert!(lm.check_in_grid((16, 16)).is_ok());
        let lm = Landmarks::new(
            Point::new(5.0, 0.0),
            Point::new(0.0, 16.0),
            Point::new(15.0, 15.0),
        )
        .unwrap();
        assert!(matches!(
            lm.check_in_grid((16, 16)),
            Err(LandmarkError::OutOfGrid { name: "P_L", .. })
        ));
    }
}
