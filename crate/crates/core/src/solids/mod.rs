//! CSG solid vocabulary: analytic volume, bounds and point membership, plus
//! tessellation into watertight triangle meshes.
//!
//! All lengths are millimetres and all angles degrees. Box and Trd take full
//! lengths; every `zhalf` is a half-length.

mod mesh;
mod tessellate;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{cos_deg, sin_deg, Aabb, Point, TOLERANCE};

pub use mesh::{mesh_volume, sweep_polyline, Mesh, MeshError};
pub use tessellate::tessellate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolidError {
    #[error("invalid {shape} parameters: {reason}")]
    InvalidParameter { shape: &'static str, reason: String },
    #[error("quality level {0} outside 0..=9")]
    Quality(u32),
}

/// Tessellation quality level, 0 (coarse) to 9 (smooth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quality(u8);

impl Quality {
    pub const MAX: Quality = Quality(9);

    pub fn new(q: u32) -> Result<Self, SolidError> {
        if q <= 9 {
            Ok(Quality(q as u8))
        } else {
            Err(SolidError::Quality(q))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Segments per full circle: 12 at q=0 up to 66 at q=9.
    pub fn segments(self) -> usize {
        12 + 6 * self.0 as usize
    }

    /// Segments used for an arc spanning `span_deg` degrees (at least one).
    pub fn arc_segments(self, span_deg: f64) -> usize {
        let n = self.segments() as f64 * span_deg / 360.0;
        ((n - 1e-9).ceil() as usize).max(1)
    }
}

impl Default for Quality {
    fn default() -> Self {
        Quality(3)
    }
}

/// One plane of a polycone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZPlane<T = f64> {
    pub z: T,
    pub rmin: T,
    pub rmax: T,
}

/// The solid vocabulary, generic over the parameter representation so the
/// same shape can carry unexpanded formula text or concrete numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape<T = f64> {
    Box {
        x: T,
        y: T,
        z: T,
    },
    Tube {
        rmin: T,
        rmax: T,
        zhalf: T,
        phi0: T,
        dphi: T,
    },
    Cone {
        rmin1: T,
        rmax1: T,
        rmin2: T,
        rmax2: T,
        zhalf: T,
        phi0: T,
        dphi: T,
    },
    Trd {
        x1: T,
        x2: T,
        y1: T,
        y2: T,
        zhalf: T,
    },
    Polycone {
        phi0: T,
        dphi: T,
        zplanes: Vec<ZPlane<T>>,
    },
    Sphere {
        rmin: T,
        rmax: T,
        theta0: T,
        dtheta: T,
        phi0: T,
        dphi: T,
    },
    Helix {
        rho: T,
        pitch: T,
        turns: T,
        rtube: T,
    },
}

/// A shape with concrete numeric parameters.
pub type Solid = Shape<f64>;

impl<T> Shape<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::Tube { .. } => "tube",
            Shape::Cone { .. } => "cone",
            Shape::Trd { .. } => "trd",
            Shape::Polycone { .. } => "polycone",
            Shape::Sphere { .. } => "sphere",
            Shape::Helix { .. } => "helix",
        }
    }

    /// Scalar parameters in declaration order (polycone planes excluded).
    pub fn scalar_params(&self) -> Vec<(&'static str, &T)> {
        match self {
            Shape::Box { x, y, z } => vec![("x", x), ("y", y), ("z", z)],
            Shape::Tube {
                rmin,
                rmax,
                zhalf,
                phi0,
                dphi,
            } => vec![
                ("rmin", rmin),
                ("rmax", rmax),
                ("zhalf", zhalf),
                ("phi0", phi0),
                ("dphi", dphi),
            ],
            Shape::Cone {
                rmin1,
                rmax1,
                rmin2,
                rmax2,
                zhalf,
                phi0,
                dphi,
            } => vec![
                ("rmin1", rmin1),
                ("rmax1", rmax1),
                ("rmin2", rmin2),
                ("rmax2", rmax2),
                ("zhalf", zhalf),
                ("phi0", phi0),
                ("dphi", dphi),
            ],
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => vec![
                ("x1", x1),
                ("x2", x2),
                ("y1", y1),
                ("y2", y2),
                ("zhalf", zhalf),
            ],
            Shape::Polycone { phi0, dphi, .. } => vec![("phi0", phi0), ("dphi", dphi)],
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                phi0,
                dphi,
            } => vec![
                ("rmin", rmin),
                ("rmax", rmax),
                ("theta0", theta0),
                ("dtheta", dtheta),
                ("phi0", phi0),
                ("dphi", dphi),
            ],
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => vec![
                ("rho", rho),
                ("pitch", pitch),
                ("turns", turns),
                ("rtube", rtube),
            ],
        }
    }

    pub fn zplanes(&self) -> &[ZPlane<T>] {
        match self {
            Shape::Polycone { zplanes, .. } => zplanes,
            _ => &[],
        }
    }

    /// Convert every parameter, stopping at the first failure.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<Shape<U>, E> {
        Ok(match self {
            Shape::Box { x, y, z } => Shape::Box {
                x: f(x)?,
                y: f(y)?,
                z: f(z)?,
            },
            Shape::Tube {
                rmin,
                rmax,
                zhalf,
                phi0,
                dphi,
            } => Shape::Tube {
                rmin: f(rmin)?,
                rmax: f(rmax)?,
                zhalf: f(zhalf)?,
                phi0: f(phi0)?,
                dphi: f(dphi)?,
            },
            Shape::Cone {
                rmin1,
                rmax1,
                rmin2,
                rmax2,
                zhalf,
                phi0,
                dphi,
            } => Shape::Cone {
                rmin1: f(rmin1)?,
                rmax1: f(rmax1)?,
                rmin2: f(rmin2)?,
                rmax2: f(rmax2)?,
                zhalf: f(zhalf)?,
                phi0: f(phi0)?,
                dphi: f(dphi)?,
            },
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => Shape::Trd {
                x1: f(x1)?,
                x2: f(x2)?,
                y1: f(y1)?,
                y2: f(y2)?,
                zhalf: f(zhalf)?,
            },
            Shape::Polycone {
                phi0,
                dphi,
                zplanes,
            } => Shape::Polycone {
                phi0: f(phi0)?,
                dphi: f(dphi)?,
                zplanes: zplanes
                    .iter()
                    .map(|p| {
                        Ok(ZPlane {
                            z: f(&p.z)?,
                            rmin: f(&p.rmin)?,
                            rmax: f(&p.rmax)?,
                        })
                    })
                    .collect::<Result<_, E>>()?,
            },
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                phi0,
                dphi,
            } => Shape::Sphere {
                rmin: f(rmin)?,
                rmax: f(rmax)?,
                theta0: f(theta0)?,
                dtheta: f(dtheta)?,
                phi0: f(phi0)?,
                dphi: f(dphi)?,
            },
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => Shape::Helix {
                rho: f(rho)?,
                pitch: f(pitch)?,
                turns: f(turns)?,
                rtube: f(rtube)?,
            },
        })
    }
}

fn invalid(shape: &'static str, reason: impl Into<String>) -> SolidError {
    SolidError::InvalidParameter {
        shape,
        reason: reason.into(),
    }
}

fn check_phi(kind: &'static str, dphi: f64) -> Result<(), SolidError> {
    if dphi > 0.0 && dphi <= 360.0 {
        Ok(())
    } else {
        Err(invalid(kind, format!("dphi {dphi} outside (0, 360]")))
    }
}

fn is_full_phi(dphi: f64) -> bool {
    dphi >= 360.0
}

/// Revolved solids reduced to a list of (z, rmin, rmax) planes.
fn revolved_planes(s: &Solid) -> Option<(f64, f64, Vec<ZPlane>)> {
    match *s {
        Shape::Tube {
            rmin,
            rmax,
            zhalf,
            phi0,
            dphi,
        } => Some((
            phi0,
            dphi,
            vec![
                ZPlane { z: -zhalf, rmin, rmax },
                ZPlane { z: zhalf, rmin, rmax },
            ],
        )),
        Shape::Cone {
            rmin1,
            rmax1,
            rmin2,
            rmax2,
            zhalf,
            phi0,
            dphi,
        } => Some((
            phi0,
            dphi,
            vec![
                ZPlane {
                    z: -zhalf,
                    rmin: rmin1,
                    rmax: rmax1,
                },
                ZPlane {
                    z: zhalf,
                    rmin: rmin2,
                    rmax: rmax2,
                },
            ],
        )),
        Shape::Polycone {
            phi0,
            dphi,
            ref zplanes,
        } => Some((phi0, dphi, zplanes.clone())),
        _ => None,
    }
}

impl Solid {
    /// Check the parameter invariants required for tessellation and queries.
    pub fn validate(&self) -> Result<(), SolidError> {
        let kind = self.kind();
        for (name, v) in self.scalar_params() {
            if !v.is_finite() {
                return Err(invalid(kind, format!("{name} is not finite")));
            }
        }
        match *self {
            Shape::Box { x, y, z } => {
                if x <= 0.0 || y <= 0.0 || z <= 0.0 {
                    return Err(invalid(kind, "all lengths must be positive"));
                }
            }
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => {
                if x1 <= 0.0 || x2 <= 0.0 || y1 <= 0.0 || y2 <= 0.0 {
                    return Err(invalid(kind, "all lengths must be positive"));
                }
                if zhalf <= 0.0 {
                    return Err(invalid(kind, "zhalf must be positive"));
                }
            }
            Shape::Tube {
                rmin,
                rmax,
                zhalf,
                dphi,
                ..
            } => {
                if rmin < 0.0 || rmin >= rmax {
                    return Err(invalid(kind, format!("need 0 <= rmin < rmax, got {rmin}, {rmax}")));
                }
                if zhalf <= 0.0 {
                    return Err(invalid(kind, "zhalf must be positive"));
                }
                check_phi(kind, dphi)?;
            }
            Shape::Cone {
                rmin1,
                rmax1,
                rmin2,
                rmax2,
                zhalf,
                dphi,
                ..
            } => {
                if rmin1 < 0.0 || rmin2 < 0.0 || rmin1 > rmax1 || rmin2 > rmax2 {
                    return Err(invalid(kind, "need 0 <= rmin <= rmax at both ends"));
                }
                if rmin1 == rmax1 && rmin2 == rmax2 {
                    return Err(invalid(kind, "zero thickness at both ends"));
                }
                if zhalf <= 0.0 {
                    return Err(invalid(kind, "zhalf must be positive"));
                }
                check_phi(kind, dphi)?;
            }
            Shape::Polycone {
                dphi, ref zplanes, ..
            } => {
                check_phi(kind, dphi)?;
                if zplanes.len() < 2 {
                    return Err(invalid(kind, "at least two z-planes required"));
                }
                for (i, p) in zplanes.iter().enumerate() {
                    if !(p.z.is_finite() && p.rmin.is_finite() && p.rmax.is_finite()) {
                        return Err(invalid(kind, format!("plane {i} is not finite")));
                    }
                    if p.rmin < 0.0 || p.rmin > p.rmax {
                        return Err(invalid(kind, format!("plane {i}: need 0 <= rmin <= rmax")));
                    }
                    let interior = i > 0 && i + 1 < zplanes.len();
                    if interior && p.rmin == p.rmax {
                        return Err(invalid(kind, format!("plane {i}: zero thickness inside the solid")));
                    }
                }
                for (i, w) in zplanes.windows(2).enumerate() {
                    if w[1].z <= w[0].z {
                        return Err(invalid(kind, format!("z-planes not strictly increasing at {}", i + 1)));
                    }
                    if w[0].rmin == w[0].rmax && w[1].rmin == w[1].rmax {
                        return Err(invalid(kind, format!("slab {i} has zero thickness")));
                    }
                }
            }
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                dphi,
                ..
            } => {
                if rmin < 0.0 || rmin >= rmax {
                    return Err(invalid(kind, "need 0 <= rmin < rmax"));
                }
                if theta0 < 0.0 || dtheta <= 0.0 || theta0 + dtheta > 180.0 + 1e-12 {
                    return Err(invalid(kind, "theta range must lie within [0, 180]"));
                }
                check_phi(kind, dphi)?;
            }
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => {
                if turns <= 0.0 {
                    return Err(invalid(kind, "turns must be positive"));
                }
                if rtube <= 0.0 || rtube >= rho {
                    return Err(invalid(kind, "need 0 < rtube < rho"));
                }
                if pitch < 0.0 {
                    return Err(invalid(kind, "pitch must be non-negative"));
                }
                if turns > 1.0 && pitch <= 2.0 * rtube {
                    return Err(invalid(kind, "adjacent turns overlap (pitch <= 2 rtube)"));
                }
            }
        }
        Ok(())
    }

    /// Closed-form volume in mm³.
    pub fn analytic_volume(&self) -> f64 {
        match *self {
            Shape::Box { x, y, z } => x * y * z,
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => {
                // prismatoid: h/6 (A1 + 4 Am + A2)
                let h = 2.0 * zhalf;
                let a1 = x1 * y1;
                let a2 = x2 * y2;
                let am = 0.25 * (x1 + x2) * (y1 + y2);
                h / 6.0 * (a1 + 4.0 * am + a2)
            }
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                dphi,
                ..
            } => {
                (rmax.powi(3) - rmin.powi(3)) / 3.0
                    * (cos_deg(theta0) - cos_deg(theta0 + dtheta))
                    * dphi.to_radians()
            }
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => PI * rtube * rtube * helix_length(rho, pitch, turns),
            _ => {
                let (_, dphi, planes) = revolved_planes(self).expect("revolved solid");
                let frac = dphi / 360.0;
                planes
                    .windows(2)
                    .map(|w| {
                        let h = w[1].z - w[0].z;
                        frustum(w[0].rmax, w[1].rmax, h) - frustum(w[0].rmin, w[1].rmin, h)
                    })
                    .sum::<f64>()
                    * frac
            }
        }
    }

    /// Local-frame bounds, minimal for boxes and containing every
    /// tessellation vertex at every quality.
    pub fn aabb(&self) -> Aabb {
        match *self {
            Shape::Box { x, y, z } => Aabb {
                min: [-x / 2.0, -y / 2.0, -z / 2.0],
                max: [x / 2.0, y / 2.0, z / 2.0],
            },
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => {
                let hx = x1.max(x2) / 2.0;
                let hy = y1.max(y2) / 2.0;
                Aabb {
                    min: [-hx, -hy, -zhalf],
                    max: [hx, hy, zhalf],
                }
            }
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => {
                let r = rho + rtube;
                let hz = pitch * turns / 2.0 + rtube;
                Aabb {
                    min: [-r, -r, -hz],
                    max: [r, r, hz],
                }
            }
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                phi0,
                dphi,
            } => {
                let t1 = theta0 + dtheta;
                let mut thetas = vec![theta0, t1];
                if theta0 < 90.0 && t1 > 90.0 {
                    thetas.push(90.0);
                }
                let mut rs = Vec::new();
                let mut zs = Vec::new();
                for &t in &thetas {
                    for r in [rmin, rmax] {
                        rs.push(r * sin_deg(t));
                        zs.push(r * cos_deg(t));
                    }
                }
                sector_bounds(phi0, dphi, &rs, &zs)
            }
            _ => {
                let (phi0, dphi, planes) = revolved_planes(self).expect("revolved solid");
                let rs: Vec<f64> = planes.iter().flat_map(|p| [p.rmin, p.rmax]).collect();
                let zs: Vec<f64> = planes.iter().map(|p| p.z).collect();
                sector_bounds(phi0, dphi, &rs, &zs)
            }
        }
    }

    /// Boundary-inclusive point membership in the local frame.
    pub fn contains(&self, p: &Point) -> bool {
        let tol = TOLERANCE;
        match *self {
            Shape::Box { x, y, z } => {
                p.x.abs() <= x / 2.0 + tol && p.y.abs() <= y / 2.0 + tol && p.z.abs() <= z / 2.0 + tol
            }
            Shape::Trd {
                x1,
                x2,
                y1,
                y2,
                zhalf,
            } => {
                if p.z.abs() > zhalf + tol {
                    return false;
                }
                let f = ((p.z + zhalf) / (2.0 * zhalf)).clamp(0.0, 1.0);
                let hx = 0.5 * (x1 + (x2 - x1) * f);
                let hy = 0.5 * (y1 + (y2 - y1) * f);
                let sx = ((x2 - x1) / (4.0 * zhalf)).hypot(1.0);
                let sy = ((y2 - y1) / (4.0 * zhalf)).hypot(1.0);
                (p.x.abs() - hx) / sx <= tol && (p.y.abs() - hy) / sy <= tol
            }
            Shape::Sphere {
                rmin,
                rmax,
                theta0,
                dtheta,
                phi0,
                dphi,
            } => {
                let r = p.coords.norm();
                if r > rmax + tol || r < rmin - tol {
                    return false;
                }
                if r > tol && (theta0 > 0.0 || theta0 + dtheta < 180.0) {
                    let theta = (p.z / r).clamp(-1.0, 1.0).acos().to_degrees();
                    let slack = (tol / r).to_degrees();
                    if theta < theta0 - slack || theta > theta0 + dtheta + slack {
                        return false;
                    }
                }
                in_phi(p, phi0, dphi)
            }
            Shape::Helix {
                rho,
                pitch,
                turns,
                rtube,
            } => helix_contains(p, rho, pitch, turns, rtube),
            _ => {
                let (phi0, dphi, planes) = revolved_planes(self).expect("revolved solid");
                let z0 = planes[0].z;
                let z1 = planes[planes.len() - 1].z;
                if p.z < z0 - tol || p.z > z1 + tol {
                    return false;
                }
                let r = p.x.hypot(p.y);
                let zc = p.z.clamp(z0, z1);
                // a point on a shared plane belongs to either neighbouring slab
                let inside_slab = planes.windows(2).any(|w| {
                    if zc < w[0].z || zc > w[1].z {
                        return false;
                    }
                    let f = (zc - w[0].z) / (w[1].z - w[0].z);
                    let lo = w[0].rmin + (w[1].rmin - w[0].rmin) * f;
                    let hi = w[0].rmax + (w[1].rmax - w[0].rmax) * f;
                    r >= lo - tol && r <= hi + tol
                });
                inside_slab && in_phi(p, phi0, dphi)
            }
        }
    }
}

fn frustum(r1: f64, r2: f64, h: f64) -> f64 {
    PI * h / 3.0 * (r1 * r1 + r1 * r2 + r2 * r2)
}

pub(crate) fn helix_length(rho: f64, pitch: f64, turns: f64) -> f64 {
    turns * (2.0 * PI * rho).hypot(pitch)
}

fn in_phi(p: &Point, phi0: f64, dphi: f64) -> bool {
    if is_full_phi(dphi) {
        return true;
    }
    let r = p.x.hypot(p.y);
    if r <= TOLERANCE {
        return true;
    }
    let a = p.y.atan2(p.x).to_degrees();
    let d = (a - phi0).rem_euclid(360.0);
    let slack = (TOLERANCE / r).to_degrees();
    d <= dphi + slack || d >= 360.0 - slack
}

/// Bounds of a phi sector of revolution given sample radii and z values.
fn sector_bounds(phi0: f64, dphi: f64, rs: &[f64], zs: &[f64]) -> Aabb {
    let mut angles = vec![phi0, phi0 + dphi];
    if is_full_phi(dphi) {
        angles = vec![0.0, 90.0, 180.0, 270.0];
    } else {
        let mut k = (phi0 / 90.0).ceil();
        while k * 90.0 < phi0 + dphi {
            angles.push(k * 90.0);
            k += 1.0;
        }
    }
    let mut b = Aabb::empty();
    for &a in &angles {
        let (c, s) = (cos_deg(a), sin_deg(a));
        for &r in rs {
            for &z in zs {
                b.grow(&Point::new(r * c, r * s, z));
            }
        }
    }
    b
}

/// Membership in a helical tube: the point must lie in the normal disk of
/// some curve parameter within the tube's extent.
fn helix_contains(p: &Point, rho: f64, pitch: f64, turns: f64, rtube: f64) -> bool {
    let tol = TOLERANCE;
    let r = p.x.hypot(p.y);
    if (r - rho).abs() > rtube + tol {
        return false;
    }
    let k = pitch / (2.0 * PI);
    let theta_max = 2.0 * PI * turns;
    let z_off = pitch * turns / 2.0;
    let (lo, hi) = if k > 0.0 {
        let zl = p.z + z_off;
        (
            ((zl - rtube - tol) / k).max(0.0),
            ((zl + rtube + tol) / k).min(theta_max),
        )
    } else {
        if p.z.abs() > rtube + tol {
            return false;
        }
        (0.0, theta_max)
    };
    if lo > hi {
        return false;
    }
    let curve = |t: f64| Point::new(rho * t.cos(), rho * t.sin(), k * t - z_off);
    let tangent = |t: f64| nalgebra::Vector3::new(-rho * t.sin(), rho * t.cos(), k);
    // g(t) = (p - c(t)) . c'(t); its roots are the normal planes through p.
    let g = |t: f64| (p - curve(t)).dot(&tangent(t));
    let dist2 = |t: f64| (p - curve(t)).norm_squared();
    let limit = (rtube + tol) * (rtube + tol);

    let steps = (((hi - lo) / (PI / 90.0)).ceil() as usize).max(8);
    let mut prev_t = lo;
    let mut prev_g = g(lo);
    let mut candidates = Vec::new();
    for i in 1..=steps {
        let t = lo + (hi - lo) * i as f64 / steps as f64;
        let gt = g(t);
        if prev_g == 0.0 {
            candidates.push(prev_t);
        } else if prev_g.signum() != gt.signum() {
            let (mut a, mut b, mut ga) = (prev_t, t, prev_g);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            candidates.push(0.5 * (a + b));
        }
        prev_t = t;
        prev_g = gt;
    }
    if prev_g == 0.0 {
        candidates.push(prev_t);
    }
    if candidates.iter().any(|&t| dist2(t) <= limit) {
        return true;
    }
    // points on an end cap lie in the normal plane at the curve ends
    [0.0, theta_max].iter().any(|&t| {
        let d = p - curve(t);
        let tan = tangent(t).normalize();
        d.dot(&tan).abs() <= tol && d.norm_squared() <= limit
    })
}
