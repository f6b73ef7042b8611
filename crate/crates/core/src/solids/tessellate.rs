use std::collections::HashMap;
use std::f64::consts::PI;

use super::mesh::{sweep_tube, MeshBuilder};
use super::{revolved_planes, Mesh, Quality, Shape, Solid, SolidError};
use crate::geom::{cos_deg, sin_deg, Point, Vector};

/// Tessellate a solid. Curved surfaces get `q.segments()` segments per full
/// circle with vertices placed on the analytic surface.
pub fn tessellate(s: &Solid, q: Quality) -> Result<Mesh, SolidError> {
    s.validate()?;
    Ok(match *s {
        Shape::Box { x, y, z } => hexahedron(x, x, y, y, z / 2.0),
        Shape::Trd {
            x1,
            x2,
            y1,
            y2,
            zhalf,
        } => hexahedron(x1, x2, y1, y2, zhalf),
        Shape::Sphere {
            rmin,
            rmax,
            theta0,
            dtheta,
            phi0,
            dphi,
        } => {
            let m = q.arc_segments(dtheta);
            // rungs run from the bottom (largest theta) to the top
            let rungs = (0..=m)
                .map(|k| {
                    let t = theta0 + dtheta - dtheta * k as f64 / m as f64;
                    let (s, c) = (sin_deg(t), cos_deg(t));
                    ((rmin * s, rmin * c), (rmax * s, rmax * c))
                })
                .collect::<Vec<_>>();
            revolve(&rungs, phi0, dphi, q)
        }
        Shape::Helix {
            rho,
            pitch,
            turns,
            rtube,
        } => helix(rho, pitch, turns, rtube, q),
        _ => {
            let (phi0, dphi, planes) = revolved_planes(s).expect("revolved solid");
            let rungs = planes
                .iter()
                .map(|p| ((p.rmin, p.z), (p.rmax, p.z)))
                .collect::<Vec<_>>();
            revolve(&rungs, phi0, dphi, q)
        }
    })
}

/// Eight-corner solid with rectangular cross-sections, full lengths at
/// each end.
fn hexahedron(x1: f64, x2: f64, y1: f64, y2: f64, zhalf: f64) -> Mesh {
    let (a1, b1, a2, b2) = (x1 / 2.0, y1 / 2.0, x2 / 2.0, y2 / 2.0);
    let mut m = Mesh {
        vertices: vec![
            Point::new(-a1, -b1, -zhalf),
            Point::new(a1, -b1, -zhalf),
            Point::new(a1, b1, -zhalf),
            Point::new(-a1, b1, -zhalf),
            Point::new(-a2, -b2, zhalf),
            Point::new(a2, -b2, zhalf),
            Point::new(a2, b2, zhalf),
            Point::new(-a2, b2, zhalf),
        ],
        triangles: vec![
            [0, 3, 2],
            [0, 2, 1],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
            [1, 2, 6],
            [1, 6, 5],
        ],
        normals: vec![],
    };
    m.compute_normals();
    m
}

#[derive(Hash, PartialEq, Eq)]
enum RevKey {
    Profile(usize, usize),
}

/// Revolve a profile about the z axis.
///
/// The profile is a ladder of rungs `(inner, outer)` in the (r, z)
/// half-plane, ordered so that the polygon inner0, outer0 .. outerN,
/// innerN .. inner0 is counter-clockwise. Points with r = 0 collapse onto
/// the axis; partial phi ranges get planar caps built from the rungs.
fn revolve(rungs: &[((f64, f64), (f64, f64))], phi0: f64, dphi: f64, q: Quality) -> Mesh {
    let mut ids: HashMap<(u64, u64), usize> = HashMap::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut id = |p: (f64, f64)| {
        let r = if p.0 <= 0.0 { 0.0 } else { p.0 };
        let z = if p.1 == 0.0 { 0.0 } else { p.1 };
        *ids.entry((r.to_bits(), z.to_bits())).or_insert_with(|| {
            points.push((r, z));
            points.len() - 1
        })
    };
    let ladder: Vec<(usize, usize)> = rungs.iter().map(|&(i, o)| (id(i), id(o))).collect();

    let full = dphi >= 360.0;
    let nphi = q.arc_segments(dphi);
    let n = ladder.len();

    let mut polygon = vec![ladder[0].0];
    polygon.extend(ladder.iter().map(|r| r.1));
    polygon.extend(ladder.iter().rev().map(|r| r.0));

    let mut b = MeshBuilder::new();
    let vertex = |b: &mut MeshBuilder<RevKey>, pid: usize, seg: usize| {
        let (r, z) = points[pid];
        let seg = if full { seg % nphi } else { seg };
        let key_seg = if r == 0.0 { 0 } else { seg };
        b.vertex(RevKey::Profile(pid, key_seg), || {
            let a = phi0 + dphi * seg as f64 / nphi as f64;
            Point::new(r * cos_deg(a), r * sin_deg(a), z)
        })
    };

    for w in polygon.windows(2) {
        let (p, q) = (w[0], w[1]);
        if p == q {
            continue;
        }
        for j in 0..nphi {
            let a = vertex(&mut b, p, j);
            let bb = vertex(&mut b, p, j + 1);
            let c = vertex(&mut b, q, j + 1);
            let d = vertex(&mut b, q, j);
            b.triangle(a, bb, c);
            b.triangle(a, c, d);
        }
    }

    if !full {
        for k in 0..n - 1 {
            let (i0, o0) = ladder[k];
            let (i1, o1) = ladder[k + 1];
            for tri in [[i0, o0, o1], [i0, o1, i1]] {
                if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                    continue;
                }
                let s = tri.map(|pid| vertex(&mut b, pid, 0));
                b.triangle(s[0], s[1], s[2]);
                let e = tri.map(|pid| vertex(&mut b, pid, nphi));
                b.triangle(e[0], e[2], e[1]);
            }
        }
    }
    b.finish()
}

fn helix(rho: f64, pitch: f64, turns: f64, rtube: f64, q: Quality) -> Mesh {
    let nseg = q.segments();
    let samples = ((nseg as f64 * turns - 1e-9).ceil() as usize).max(2);
    let theta_max = 2.0 * PI * turns;
    let k = pitch / (2.0 * PI);
    let z_off = pitch * turns / 2.0;
    let mut centers = Vec::with_capacity(samples + 1);
    let mut frames = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let t = theta_max * i as f64 / samples as f64;
        let (s, c) = t.sin_cos();
        centers.push(Point::new(rho * c, rho * s, k * t - z_off));
        let tangent = Vector::new(-rho * s, rho * c, k).normalize();
        let normal = Vector::new(-c, -s, 0.0);
        frames.push((normal, tangent.cross(&normal)));
    }
    sweep_tube(&centers, &frames, rtube, nseg)
}
