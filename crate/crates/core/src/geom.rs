//! Small geometric helpers shared by the solid, scene and query modules.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;
pub type Matrix = Matrix4<f64>;

/// Absolute tolerance (mm) used for boundary-inclusive containment tests.
pub const TOLERANCE: f64 = 1e-9;

/// Cosine of an angle in degrees, exact at multiples of 90.
pub fn cos_deg(deg: f64) -> f64 {
    sin_deg(deg + 90.0)
}

/// Sine of an angle in degrees, exact at multiples of 90.
pub fn sin_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 || r == 180.0 {
        0.0
    } else if r == 90.0 {
        1.0
    } else if r == 270.0 {
        -1.0
    } else {
        r.to_radians().sin()
    }
}

/// Rotation about X, then Y, then Z (intrinsic), angles in degrees.
pub fn euler_xyz(angles: [f64; 3]) -> Matrix3<f64> {
    let (cx, sx) = (cos_deg(angles[0]), sin_deg(angles[0]));
    let (cy, sy) = (cos_deg(angles[1]), sin_deg(angles[1]));
    let (cz, sz) = (cos_deg(angles[2]), sin_deg(angles[2]));
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

/// Placement matrix: translate after rotating.
pub fn placement_matrix(translation: [f64; 3], rotation: [f64; 3]) -> Matrix {
    let mut m = euler_xyz(rotation).to_homogeneous();
    m[(0, 3)] = translation[0];
    m[(1, 3)] = translation[1];
    m[(2, 3)] = translation[2];
    m
}

pub fn translation(t: [f64; 3]) -> Matrix {
    Matrix::new_translation(&Vector::new(t[0], t[1], t[2]))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Point) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        for i in 0..3 {
            b.min[i] = b.min[i].min(other.min[i]);
            b.max[i] = b.max[i].max(other.max[i]);
        }
        b
    }

    pub fn inflate(&self, d: f64) -> Aabb {
        Aabb {
            min: self.min.map(|v| v - d),
            max: self.max.map(|v| v + d),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn corners(&self) -> [Point; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point::new(a[0], a[1], a[2]),
            Point::new(b[0], a[1], a[2]),
            Point::new(a[0], b[1], a[2]),
            Point::new(b[0], b[1], a[2]),
            Point::new(a[0], a[1], b[2]),
            Point::new(b[0], a[1], b[2]),
            Point::new(a[0], b[1], b[2]),
            Point::new(b[0], b[1], b[2]),
        ]
    }

    /// Bounds of this box after an affine transform.
    pub fn transformed(&self, m: &Matrix) -> Aabb {
        if self.is_empty() {
            return *self;
        }
        let pts = self.corners().map(|c| m.transform_point(&c));
        Aabb::from_points(pts.iter())
    }

    /// Slab test; returns the parametric entry distance if the ray hits the box
    /// at some t in `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Point, inv_dir: &Vector, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let mut near = (self.min[i] - origin[i]) * inv_dir[i];
            let mut far = (self.max[i] - origin[i]) * inv_dir[i];
            if near.is_nan() || far.is_nan() {
                // origin on the slab plane with a zero direction component
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Format a number with at most 9 significant digits, locale independent,
/// trailing zeros trimmed (the `%.9g` convention).
pub fn fmt_g9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        let s = trim_zeros(&fixed);
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}
