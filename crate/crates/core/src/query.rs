//! Point location, ray picking and collision tests on a compiled scene.
//!
//! Location uses the analytic solids; picking uses the tessellated
//! triangles, which is what is drawn. Near curved surfaces the two can
//! disagree by the tessellation error.

use serde::Serialize;
use thiserror::Error;

use crate::geom::{Aabb, Point, Vector, TOLERANCE};
use crate::scene::{CompiledScene, Geometry};
use crate::solids::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("optimization level 3 discards identities; point location is unavailable")]
    IdentitiesDiscarded,
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("no volume at path `{0}`")]
    UnknownPath(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickHit {
    pub path: Vec<String>,
    /// Distance along the unit direction, mm.
    pub t: f64,
    pub point: [f64; 3],
    #[serde(skip)]
    pub instance: usize,
}

/// Deepest volume whose solid contains `p`; equal depths resolve to the
/// lexicographically smaller path. Visibility does not matter.
pub fn locate(scene: &CompiledScene, p: &Point) -> Result<Option<Vec<String>>, QueryError> {
    if scene.stats().optimization >= 3 {
        return Err(QueryError::IdentitiesDiscarded);
    }
    let mut best: Option<usize> = None;
    scene.bvh().visit_point(p, TOLERANCE, |i| {
        let inst = &scene.instances()[i];
        let Some(solid) = scene.volume(i).solid() else { return };
        if !solid.contains(&inst.inverse.transform_point(p)) {
            return;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &scene.instances()[b].path;
                inst.path.len() > cur.len() || (inst.path.len() == cur.len() && inst.path < *cur)
            }
        };
        if better {
            best = Some(i);
        }
    });
    Ok(best.map(|i| scene.instances()[i].path.clone()))
}

/// Ray/triangle intersection distance (Möller–Trumbore, two-sided).
/// Returns `t` with `t > 0`.
pub fn ray_triangle(o: &Point, d: &Vector, tri: &[Point; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let h = d.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() * d.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = inv * s.dot(&h);
    const EPS: f64 = 1e-12;
    if !(-EPS..=1.0 + EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = inv * d.dot(&q);
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    let t = inv * e2.dot(&q);
    (t > 0.0).then_some(t)
}

/// Nearest intersection with a visible, pickable mesh. Hits within 1e-9 mm
/// of each other resolve to the lexicographically smaller path.
pub fn pick(scene: &CompiledScene, origin: &Point, direction: &Vector) -> Result<Option<PickHit>, QueryError> {
    let n = direction.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(QueryError::ZeroDirection);
    }
    let d = direction / n;
    let mut best: Option<(f64, usize)> = None;
    scene.bvh().visit_ray(origin, &d, |i, best_t| {
        let inst = &scene.instances()[i];
        if !inst.pickable || !scene.is_visible(i) {
            return best_t;
        }
        let Geometry::Mesh(mesh) = scene.geometry(inst.geometry) else {
            return best_t;
        };
        let lo = inst.inverse.transform_point(origin);
        let ld = inst.inverse.transform_vector(&d);
        let Some(t) = nearest_hit(mesh, &lo, &ld) else {
            return best_t;
        };
        let replace = match best {
            None => true,
            Some((bt, bi)) => t < bt - 1e-9 || (t <= bt + 1e-9 && inst.path < scene.instances()[bi].path),
        };
        if replace {
            best = Some((t, i));
        }
        best.map_or(best_t, |(t, _)| t)
    });
    Ok(best.map(|(t, i)| {
        let p = origin + d * t;
        PickHit {
            path: scene.instances()[i].path.clone(),
            t,
            point: [p.x, p.y, p.z],
            instance: i,
        }
    }))
}

fn nearest_hit(mesh: &Mesh, o: &Point, d: &Vector) -> Option<f64> {
    (0..mesh.triangles.len())
        .filter_map(|k| ray_triangle(o, d, &mesh.triangle(k)))
        .min_by(f64::total_cmp)
}

fn segment_hits_triangle(a: &Point, b: &Point, tri: &[Point; 3]) -> bool {
    let d = b - a;
    ray_triangle(a, &d, tri).is_some_and(|t| t <= 1.0)
}

/// True when two instances intersect: bounding boxes overlap and either
/// some pair of triangles intersects or a vertex of one lies inside the
/// other's solid. Touching faces count as a collision.
pub fn collide(scene: &CompiledScene, a: &[String], b: &[String]) -> Result<bool, QueryError> {
    let find = |p: &[String]| scene.find(p).ok_or_else(|| QueryError::UnknownPath(p.join("/")));
    let (ia, ib) = (find(a)?, find(b)?);
    let (instances, pad) = (scene.instances(), TOLERANCE);
    if !instances[ia].bounds.inflate(pad).overlaps(&instances[ib].bounds) {
        return Ok(false);
    }
    let world_tris = |i: usize, region: &Aabb| -> Vec<[Point; 3]> {
        let inst = &instances[i];
        match scene.geometry(inst.geometry) {
            Geometry::Mesh(m) => (0..m.triangles.len())
                .map(|k| m.triangle(k).map(|p| inst.world.transform_point(&p)))
                .filter(|t| Aabb::from_points(t.iter()).overlaps(region))
                .collect(),
            _ => Vec::new(),
        }
    };
    let region = bounds_intersection(&instances[ia].bounds, &instances[ib].bounds).inflate(pad);
    let ta = world_tris(ia, &region);
    let tb = world_tris(ib, &region);
    for (x, y) in [(&ta, &tb), (&tb, &ta)] {
        for t in x {
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                if y.iter().any(|u| segment_hits_triangle(&p, &q, u)) {
                    return Ok(true);
                }
            }
        }
    }
    for (from, into) in [(ia, ib), (ib, ia)] {
        let Some(solid) = scene.volume(into).solid() else { continue };
        let inv = instances[into].inverse;
        if let Geometry::Mesh(m) = scene.geometry(instances[from].geometry) {
            let w = instances[from].world;
            if m
                .vertices
                .iter()
                .any(|v| solid.contains(&inv.transform_point(&w.transform_point(v))))
            {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn bounds_intersection(a: &Aabb, b: &Aabb) -> Aabb {
    let mut out = *a;
    for i in 0..3 {
        out.min[i] = a.min[i].max(b.min[i]);
        out.max[i] = a.max[i].min(b.max[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_document;
    use crate::scene::{build, compile, BuildOptions};

    fn scene(xml: &str, opt: u8) -> CompiledScene {
        let doc = parse_document(xml).unwrap().document;
        compile(
            build(
                &doc,
                &BuildOptions {
                    optimization: opt,
                    ..BuildOptions::default()
                },
            )
            .unwrap(),
        )
    }

    fn path(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    const NESTED: &str = r#"<AGDD world="world">
        <box name="mbox" x="10" y="10" z="10"/>
        <box name="daughter" x="2" y="2" z="2"/>
        <tube name="pipe" rmin="1" rmax="2" zhalf="1"/>
        <composition name="mother" envelope="mbox"><posXYZ volume="daughter"/></composition>
        <composition name="holder" envelope="mbox"><posXYZ volume="pipe"/></composition>
        <composition name="world"><posXYZ volume="mother"/><posXYZ volume="holder" XYZ="20;0;0"/></composition>
    </AGDD>"#;

    #[test]
    fn locate_deepest() {
        let s = scene(NESTED, 1);
        assert_eq!(
            locate(&s, &Point::origin()).unwrap(),
            Some(path(&["world", "mother", "daughter"]))
        );
        assert_eq!(locate(&s, &Point::new(3.0, 0.0, 0.0)).unwrap(), Some(path(&["world", "mother"])));
        assert_eq!(locate(&s, &Point::new(100.0, 0.0, 0.0)).unwrap(), None);
        // inside the pipe's hole the holder envelope is the answer
        assert_eq!(locate(&s, &Point::new(20.5, 0.0, 0.0)).unwrap(), Some(path(&["world", "holder"])));
        assert_eq!(
            locate(&s, &Point::new(21.5, 0.0, 0.0)).unwrap(),
            Some(path(&["world", "holder", "pipe"]))
        );
        assert_eq!(
            locate(&scene(NESTED, 3), &Point::origin()),
            Err(QueryError::IdentitiesDiscarded)
        );
    }

    const TWO_BOXES: &str = r#"<AGDD world="w">
        <box name="a" x="2" y="2" z="2"/><box name="b" x="2" y="2" z="2"/>
        <composition name="w"><posXYZ volume="a" XYZ="5;0;0"/><posXYZ volume="b" XYZ="10;0;0"/></composition>
    </AGDD>"#;

    #[test]
    fn pick_nearest_and_from_inside() {
        let s = scene(TWO_BOXES, 1);
        let hit = pick(&s, &Point::origin(), &Vector::new(2.0, 0.0, 0.0)).unwrap().unwrap();
        assert_eq!(hit.path, path(&["w", "a"]));
        assert!((hit.t - 4.0).abs() < 1e-9);
        let inside = pick(&s, &Point::new(5.0, 0.0, 0.0), &Vector::x()).unwrap().unwrap();
        assert!((inside.t - 1.0).abs() < 1e-9);
        assert_eq!(inside.path, path(&["w", "a"]));
        assert!(pick(&s, &Point::origin(), &Vector::y()).unwrap().is_none());
        assert_eq!(pick(&s, &Point::origin(), &Vector::zeros()), Err(QueryError::ZeroDirection));
    }

    #[test]
    fn hidden_shapes_are_not_picked() {
        let mut s = scene(TWO_BOXES, 1);
        s.toggle_visibility(&path(&["w", "a"]), false).unwrap();
        let hit = pick(&s, &Point::origin(), &Vector::x()).unwrap().unwrap();
        assert_eq!(hit.path, path(&["w", "b"]));
        assert!((hit.t - 9.0).abs() < 1e-9);
    }

    fn pair(offset: f64) -> CompiledScene {
        scene(
            &format!(
                r#"<AGDD world="w"><box name="u" x="1" y="1" z="1"/>
                <composition name="w"><posXYZ volume="u"/><posXYZ volume="u" XYZ="{offset};0;0"/></composition></AGDD>"#
            ),
            1,
        )
    }

    #[test]
    fn collisions() {
        let (a, b) = (path(&["w", "u#0"]), path(&["w", "u#1"]));
        assert!(!collide(&pair(10.0), &a, &b).unwrap());
        assert!(collide(&pair(0.5), &a, &b).unwrap());
        assert!(collide(&pair(1.0), &a, &b).unwrap());
        assert!(!collide(&pair(1.001), &a, &b).unwrap());
        assert!(matches!(collide(&pair(1.0), &a, &path(&["w"])), Err(QueryError::UnknownPath(_))));
    }
}
