//! Oracles shared by the integration tests. Nothing here calls the
//! library's transform, traversal or intersection code.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use geomodel::geom::{Matrix, Point, Vector};
use geomodel::solids::{Mesh, Solid, ZPlane};
use nalgebra::{Rotation3, Translation3, Vector3};
use rand::rngs::StdRng;
use rand::Rng;

/// Placement transform built from axis rotations: translation, then
/// rotations about x, y and z applied in that order to the frame.
pub fn pose(t: [f64; 3], rot_deg: [f64; 3]) -> Matrix {
    let r = Rotation3::from_axis_angle(&Vector3::x_axis(), rot_deg[0].to_radians())
        * Rotation3::from_axis_angle(&Vector3::y_axis(), rot_deg[1].to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), rot_deg[2].to_radians());
    Translation3::new(t[0], t[1], t[2]).to_homogeneous() * r.to_homogeneous()
}

/// Analytic volume, written independently of the library.
pub fn volume(s: &Solid) -> f64 {
    let frustum = |r1: f64, r2: f64, h: f64| PI * h / 3.0 * (r1 * r1 + r1 * r2 + r2 * r2);
    match s {
        Solid::Box { x, y, z } => x * y * z,
        Solid::Trd { x1, x2, y1, y2, zhalf } => {
            let h = 2.0 * zhalf;
            h / 6.0 * (x1 * y1 + (x1 + x2) * (y1 + y2) + x2 * y2)
        }
        Solid::Tube { rmin, rmax, zhalf, dphi, .. } => dphi / 360.0 * PI * (rmax * rmax - rmin * rmin) * 2.0 * zhalf,
        Solid::Cone {
            rmin1,
            rmax1,
            rmin2,
            rmax2,
            zhalf,
            dphi,
            ..
        } => dphi / 360.0 * (frustum(*rmax1, *rmax2, 2.0 * zhalf) - frustum(*rmin1, *rmin2, 2.0 * zhalf)),
        Solid::Polycone { dphi, zplanes, .. } => {
            dphi / 360.0
                * zplanes
                    .windows(2)
                    .map(|w| {
                        let h = w[1].z - w[0].z;
                        frustum(w[0].rmax, w[1].rmax, h) - frustum(w[0].rmin, w[1].rmin, h)
                    })
                    .sum::<f64>()
        }
        Solid::Sphere {
            rmin,
            rmax,
            theta0,
            dtheta,
            dphi,
            ..
        } => {
            let band = theta0.to_radians().cos() - (theta0 + dtheta).to_radians().cos();
            dphi.to_radians() * (rmax.powi(3) - rmin.powi(3)) / 3.0 * band
        }
        Solid::Helix { rho, pitch, turns, rtube } => PI * rtube * rtube * turns * (2.0 * PI * rho).hypot(*pitch),
    }
}

/// Sum of signed tetrahedron volumes against the origin.
pub fn signed_volume(m: &Mesh) -> f64 {
    m.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| m.vertices[i as usize].coords);
            a.dot(&b.cross(&c)) / 6.0
        })
        .sum()
}

/// Closed two-manifold check with outward orientation: every directed
/// edge appears once and its reverse once, and each edge-connected shell
/// encloses positive volume unless it bounds a cavity inside another shell.
pub fn watertight(m: &Mesh) -> Result<(), String> {
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for (k, t) in m.triangles.iter().enumerate() {
        for e in 0..3 {
            let key = (t[e], t[(e + 1) % 3]);
            if key.0 == key.1 {
                return Err(format!("triangle {k} repeats a vertex"));
            }
            if directed.insert(key, k).is_some() {
                return Err(format!("directed edge {key:?} used twice"));
            }
        }
    }
    let mut parent: Vec<usize> = (0..m.triangles.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (&(a, b), &k) in &directed {
        let Some(&other) = directed.get(&(b, a)) else {
            return Err(format!("edge ({a}, {b}) has no opposite"));
        };
        let (x, y) = (root(&mut parent, k), root(&mut parent, other));
        parent[x] = y;
    }
    let mut shells: HashMap<usize, Mesh> = HashMap::new();
    for (k, t) in m.triangles.iter().enumerate() {
        let r = root(&mut parent, k);
        shells
            .entry(r)
            .or_insert_with(|| Mesh {
                vertices: m.vertices.clone(),
                triangles: Vec::new(),
                normals: Vec::new(),
            })
            .triangles
            .push(*t);
    }
    let shells: Vec<Mesh> = shells.into_values().collect();
    for (i, s) in shells.iter().enumerate() {
        let probe = m.vertices[s.triangles[0][0] as usize];
        let depth = shells
            .iter()
            .enumerate()
            .filter(|&(j, o)| j != i && winding_number(o, &probe).abs() > 0.5)
            .count();
        let v = signed_volume(s);
        if (v > 0.0) != (depth % 2 == 0) {
            return Err(format!("shell {i} at nesting depth {depth} has signed volume {v}"));
        }
    }
    Ok(())
}

/// Generalized winding number of a closed mesh around `p`.
pub fn winding_number(m: &Mesh, p: &Point) -> f64 {
    let mut total = 0.0;
    for t in &m.triangles {
        let [a, b, c] = t.map(|i| m.vertices[i as usize] - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * PI)
}

/// Ray/triangle distance in world space, two-sided, `t > 0`.
pub fn ray_hit(o: &Point, d: &Vector, tri: &[Point; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let s = o - tri[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    let eps = 1e-12;
    if u < -eps || v < -eps || u + v > 1.0 + eps {
        return None;
    }
    let t = e2.dot(&q) / det;
    (t > 0.0).then_some(t)
}

/// Triangle rounded to a 1e-6 mm grid and rotated so the smallest vertex
/// comes first; orientation is kept.
pub type CanonTri = [[i64; 3]; 3];

pub fn canonical(tris: &[[Point; 3]]) -> Vec<CanonTri> {
    let q = |v: f64| {
        let r = (v * 1e6).round() as i64;
        if r == 0 {
            0
        } else {
            r
        }
    };
    let mut out: Vec<CanonTri> = tris
        .iter()
        .map(|t| {
            let v = t.map(|p| [q(p.x), q(p.y), q(p.z)]);
            let k = (0..3).min_by_key(|&i| v[i]).unwrap();
            [v[k], v[(k + 1) % 3], v[(k + 2) % 3]]
        })
        .collect();
    out.sort();
    out
}

/// A placed solid as the generator expects the scene to hold it.
#[derive(Debug, Clone)]
pub struct Placed {
    pub path: Vec<String>,
    pub world: Matrix,
    pub solid: Solid,
}

#[derive(Debug, Clone)]
pub struct RandomScene {
    pub xml: String,
    pub placed: Vec<Placed>,
    /// Paths of the placements directly under the world volume.
    pub top: Vec<Vec<String>>,
}

fn solid_xml(name: &str, s: &Solid) -> String {
    match s {
        Solid::Box { x, y, z } => format!(r#"<box name="{name}" x="{x}" y="{y}" z="{z}"/>"#),
        Solid::Trd { x1, x2, y1, y2, zhalf } => {
            format!(r#"<trd name="{name}" x1="{x1}" x2="{x2}" y1="{y1}" y2="{y2}" zhalf="{zhalf}"/>"#)
        }
        Solid::Tube {
            rmin,
            rmax,
            zhalf,
            phi0,
            dphi,
        } => format!(r#"<tube name="{name}" rmin="{rmin}" rmax="{rmax}" zhalf="{zhalf}" phi0="{phi0}" dphi="{dphi}"/>"#),
        Solid::Cone {
            rmin1,
            rmax1,
            rmin2,
            rmax2,
            zhalf,
            phi0,
            dphi,
        } => format!(
            r#"<cone name="{name}" rmin1="{rmin1}" rmax1="{rmax1}" rmin2="{rmin2}" rmax2="{rmax2}" zhalf="{zhalf}" phi0="{phi0}" dphi="{dphi}"/>"#
        ),
        Solid::Polycone { phi0, dphi, zplanes } => {
            let planes: String = zplanes
                .iter()
                .map(|p| format!(r#"<zplane z="{}" rmin="{}" rmax="{}"/>"#, p.z, p.rmin, p.rmax))
                .collect();
            format!(r#"<polycone name="{name}" phi0="{phi0}" dphi="{dphi}">{planes}</polycone>"#)
        }
        Solid::Sphere {
            rmin,
            rmax,
            theta0,
            dtheta,
            phi0,
            dphi,
        } => format!(
            r#"<sphere name="{name}" rmin="{rmin}" rmax="{rmax}" theta0="{theta0}" dtheta="{dtheta}" phi0="{phi0}" dphi="{dphi}"/>"#
        ),
        Solid::Helix { rho, pitch, turns, rtube } => {
            format!(r#"<helix name="{name}" rho="{rho}" pitch="{pitch}" turns="{turns}" rtube="{rtube}"/>"#)
        }
    }
}

/// Values on a 1/8 grid print exactly and survive the text round trip.
fn grid(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 8.0).round() / 8.0
}

pub fn random_solid(rng: &mut StdRng) -> Solid {
    let phi = |rng: &mut StdRng| -> (f64, f64) {
        if rng.gen_bool(0.5) {
            (0.0, 360.0)
        } else {
            (grid(rng, 0.0, 180.0), grid(rng, 60.0, 300.0))
        }
    };
    match rng.gen_range(0..7) {
        0 => Solid::Box {
            x: grid(rng, 1.0, 8.0),
            y: grid(rng, 1.0, 8.0),
            z: grid(rng, 1.0, 8.0),
        },
        1 => Solid::Trd {
            x1: grid(rng, 1.0, 8.0),
            x2: grid(rng, 1.0, 8.0),
            y1: grid(rng, 1.0, 8.0),
            y2: grid(rng, 1.0, 8.0),
            zhalf: grid(rng, 1.0, 4.0),
        },
        2 => {
            let (phi0, dphi) = phi(rng);
            let rmin = if rng.gen_bool(0.5) { 0.0 } else { grid(rng, 0.5, 2.0) };
            Solid::Tube {
                rmin,
                rmax: rmin + grid(rng, 1.0, 4.0),
                zhalf: grid(rng, 1.0, 4.0),
                phi0,
                dphi,
            }
        }
        3 => {
            let (phi0, dphi) = phi(rng);
            let (rmin1, rmin2) = (grid(rng, 0.0, 2.0), grid(rng, 0.0, 2.0));
            Solid::Cone {
                rmin1,
                rmax1: rmin1 + grid(rng, 1.0, 3.0),
                rmin2,
                rmax2: rmin2 + grid(rng, 1.0, 3.0),
                zhalf: grid(rng, 1.0, 4.0),
                phi0,
                dphi,
            }
        }
        4 => {
            let (phi0, dphi) = phi(rng);
            let mut z = grid(rng, -4.0, -2.0);
            let zplanes = (0..rng.gen_range(2..5))
                .map(|_| {
                    let rmin = grid(rng, 0.0, 1.5);
                    let p = ZPlane {
                        z,
                        rmin,
                        rmax: rmin + grid(rng, 1.0, 3.0),
                    };
                    z += grid(rng, 1.0, 3.0);
                    p
                })
                .collect();
            Solid::Polycone { phi0, dphi, zplanes }
        }
        5 => {
            let (phi0, dphi) = phi(rng);
            let (theta0, dtheta) = if rng.gen_bool(0.5) {
                (0.0, 180.0)
            } else {
                let t0 = grid(rng, 0.0, 90.0);
                (t0, grid(rng, 30.0, 180.0 - t0))
            };
            let rmin = if rng.gen_bool(0.5) { 0.0 } else { grid(rng, 0.5, 2.0) };
            Solid::Sphere {
                rmin,
                rmax: rmin + grid(rng, 1.0, 3.0),
                theta0,
                dtheta,
                phi0,
                dphi,
            }
        }
        _ => {
            let rtube = grid(rng, 0.25, 0.75);
            Solid::Helix {
                rho: grid(rng, 2.0, 4.0),
                pitch: grid(rng, 2.0, 4.0),
                turns: grid(rng, 0.5, 2.5),
                rtube,
            }
        }
    }
}

struct Comp {
    name: String,
    envelope: Option<String>,
    /// (volume, translation, rotation)
    children: Vec<(String, [f64; 3], [f64; 3])>,
}

fn labels(children: &[(String, [f64; 3], [f64; 3])]) -> Vec<String> {
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for c in children {
        *totals.entry(&c.0).or_default() += 1;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    children
        .iter()
        .map(|c| {
            if totals[c.0.as_str()] == 1 {
                c.0.clone()
            } else {
                let k = seen.entry(&c.0).or_default();
                *k += 1;
                format!("{}#{}", c.0, *k - 1)
            }
        })
        .collect()
}

/// A random detector with up to `max_instances` drawn solids: leaf solids,
/// enveloped and plain sub-assemblies, and one assembly nested in another.
/// The expected world matrix of every solid is tracked alongside.
pub fn random_scene(rng: &mut StdRng, max_instances: usize) -> RandomScene {
    let mut solids: Vec<(String, Solid)> = (0..6).map(|i| (format!("s{i}"), random_solid(rng))).collect();
    let pos = |rng: &mut StdRng, reach: f64| -> ([f64; 3], [f64; 3]) {
        let t = [grid(rng, -reach, reach), grid(rng, -reach, reach), grid(rng, -reach, reach)];
        let r = if rng.gen_bool(0.3) {
            [0.0; 3]
        } else {
            [grid(rng, -180.0, 180.0), grid(rng, -180.0, 180.0), grid(rng, -180.0, 180.0)]
        };
        (t, r)
    };
    let leaf = |rng: &mut StdRng| format!("s{}", rng.gen_range(0..6));
    let mut comps: Vec<Comp> = Vec::new();
    for (i, env) in [Some(12.0), Some(14.0), None].into_iter().enumerate() {
        let envelope = env.map(|e| {
            let name = format!("e{i}");
            solids.push((name.clone(), Solid::Box { x: e, y: e, z: e }));
            name
        });
        let mut children = Vec::new();
        for _ in 0..rng.gen_range(1..4) {
            let (t, r) = pos(rng, 3.0);
            children.push((leaf(rng), t, r));
        }
        if i == 1 {
            let (t, r) = pos(rng, 2.0);
            children.push(("c0".to_string(), t, r));
        }
        comps.push(Comp {
            name: format!("c{i}"),
            envelope,
            children,
        });
    }
    let comp_size = |name: &str, comps: &[Comp]| -> usize {
        fn size(name: &str, comps: &[Comp]) -> usize {
            match comps.iter().find(|c| c.name == name) {
                None => 1,
                Some(c) => c.envelope.is_some() as usize + c.children.iter().map(|ch| size(&ch.0, comps)).sum::<usize>(),
            }
        }
        size(name, comps)
    };
    let mut world: Vec<(String, [f64; 3], [f64; 3])> = Vec::new();
    let mut count = 0;
    let target = rng.gen_range(max_instances / 3..=max_instances);
    loop {
        let v = if rng.gen_bool(0.7) {
            leaf(rng)
        } else {
            format!("c{}", rng.gen_range(0..3))
        };
        let n = comp_size(&v, &comps);
        if count + n > target {
            break;
        }
        count += n;
        let (t, r) = pos(rng, 40.0);
        world.push((v, t, r));
    }
    comps.push(Comp {
        name: "w".into(),
        envelope: None,
        children: world,
    });

    let mut xml = String::from(r#"<AGDD world="w">"#);
    for (name, s) in &solids {
        xml.push_str(&solid_xml(name, s));
    }
    for c in &comps {
        match &c.envelope {
            Some(e) => xml.push_str(&format!(r#"<composition name="{}" envelope="{e}">"#, c.name)),
            None => xml.push_str(&format!(r#"<composition name="{}">"#, c.name)),
        }
        for (v, t, r) in &c.children {
            xml.push_str(&format!(
                r#"<posXYZ volume="{v}" XYZ="{};{};{}" rot="{};{};{}"/>"#,
                t[0], t[1], t[2], r[0], r[1], r[2]
            ));
        }
        xml.push_str("</composition>");
    }
    xml.push_str("</AGDD>");

    let solid_of: HashMap<&str, &Solid> = solids.iter().map(|(n, s)| (n.as_str(), s)).collect();
    let mut placed = Vec::new();
    fn expand(
        name: &str,
        world: Matrix,
        path: Vec<String>,
        comps: &[Comp],
        solid_of: &HashMap<&str, &Solid>,
        out: &mut Vec<Placed>,
    ) {
        match comps.iter().find(|c| c.name == name) {
            None => out.push(Placed {
                path,
                world,
                solid: solid_of[name].clone(),
            }),
            Some(c) => {
                if let Some(e) = &c.envelope {
                    out.push(Placed {
                        path: path.clone(),
                        world,
                        solid: solid_of[e.as_str()].clone(),
                    });
                }
                for (ch, label) in c.children.iter().zip(labels(&c.children)) {
                    let mut p = path.clone();
                    p.push(label);
                    expand(&ch.0, world * pose(ch.1, ch.2), p, comps, solid_of, out);
                }
            }
        }
    }
    expand("w", Matrix::identity(), vec!["w".into()], &comps, &solid_of, &mut placed);
    let top = labels(&comps.last().unwrap().children)
        .into_iter()
        .map(|l| vec!["w".to_string(), l])
        .collect();
    RandomScene { xml, placed, top }
}

/// World-space bounds of a placed solid, from its local box corners.
pub fn world_bounds(p: &Placed) -> ([f64; 3], [f64; 3]) {
    let b = p.solid.aabb();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..8 {
        let c = Point::new(
            if i & 1 == 0 { b.min[0] } else { b.max[0] },
            if i & 2 == 0 { b.min[1] } else { b.max[1] },
            if i & 4 == 0 { b.min[2] } else { b.max[2] },
        );
        let w = p.world.transform_point(&c);
        for k in 0..3 {
            lo[k] = lo[k].min(w[k]);
            hi[k] = hi[k].max(w[k]);
        }
    }
    (lo, hi)
}

/// Brute-force point location over the generator's own placements.
pub struct LocateOracle<'a> {
    placed: &'a [Placed],
    inverse: Vec<Matrix>,
    bounds: Vec<([f64; 3], [f64; 3])>,
}

impl<'a> LocateOracle<'a> {
    pub fn new(placed: &'a [Placed]) -> Self {
        LocateOracle {
            placed,
            inverse: placed.iter().map(|p| p.world.try_inverse().unwrap()).collect(),
            bounds: placed.iter().map(world_bounds).collect(),
        }
    }

    /// Indices of every solid containing `p`.
    pub fn containing(&self, p: &Point) -> Vec<usize> {
        (0..self.placed.len())
            .filter(|&i| {
                let (lo, hi) = &self.bounds[i];
                (0..3).all(|k| p[k] >= lo[k] - 1e-6 && p[k] <= hi[k] + 1e-6)
                    && self.placed[i].solid.contains(&self.inverse[i].transform_point(p))
            })
            .collect()
    }

    /// Deepest containing path, ties to the smaller path. `None` marks a
    /// point inside the boundary band, where containment changes under a
    /// 1e-6 mm move along any axis.
    pub fn locate(&self, p: &Point) -> Option<Option<Vec<String>>> {
        let here = self.containing(p);
        for k in 0..3 {
            for s in [-1e-6, 1e-6] {
                let mut q = *p;
                q[k] += s;
                if self.containing(&q) != here {
                    return None;
                }
            }
        }
        Some(
            here.iter()
                .map(|&i| &self.placed[i].path)
                .max_by(|a, b| a.len().cmp(&b.len()).then(b.cmp(a)))
                .cloned(),
        )
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (l, h) in &self.bounds {
            for k in 0..3 {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(h[k]);
            }
        }
        (lo, hi)
    }

    pub fn placed(&self) -> &[Placed] {
        self.placed
    }
}

/// Nearest hit over every world-space triangle; ties within 1e-9 mm go to
/// the smaller path.
pub fn pick_oracle(tris: &[(usize, [Point; 3])], placed: &[Placed], o: &Point, d: &Vector) -> Option<(Vec<String>, f64)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, t) in tris {
        let Some(h) = ray_hit(o, d, t) else { continue };
        best = match best {
            None => Some((h, *i)),
            Some((bt, _)) if h < bt - 1e-9 => Some((h, *i)),
            Some((bt, bi)) if h <= bt + 1e-9 && placed[*i].path < placed[bi].path => Some((h.min(bt), *i)),
            keep => keep,
        };
    }
    best.map(|(t, i)| (placed[i].path.clone(), t))
}

/// Uniform point in a box.
pub fn point_in(rng: &mut StdRng, lo: [f64; 3], hi: [f64; 3]) -> Point {
    Point::new(
        rng.gen_range(lo[0]..hi[0]),
        rng.gen_range(lo[1]..hi[1]),
        rng.gen_range(lo[2]..hi[2]),
    )
}

pub fn unit_vector(rng: &mut StdRng) -> Vector {
    loop {
        let v = Vector::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}
