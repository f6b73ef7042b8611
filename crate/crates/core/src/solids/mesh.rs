use std::collections::HashMap;

use thiserror::Error;

use crate::geom::{Aabb, Matrix, Point, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("edge {0}-{1} is not shared by exactly two opposite triangles")]
    OpenEdge(u32, u32),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("mesh is inside out (signed volume {0})")]
    Inverted(f64),
    #[error("triangle {0} references a missing vertex")]
    BadIndex(usize),
}

/// Indexed triangle mesh with per-vertex unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vector>,
}

impl Mesh {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    /// Divergence-theorem volume without any closedness check.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| self.vertices[v as usize].coords);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Every directed edge must occur once with its reverse occurring once.
    pub fn check_closed(&self) -> Result<(), MeshError> {
        let n = self.vertices.len() as u32;
        let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 3);
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(MeshError::BadIndex(i));
            }
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut keys: Vec<_> = edges.iter().collect();
        keys.sort();
        for (&(a, b), &count) in keys {
            if count != 1 || edges.get(&(b, a)) != Some(&1) {
                return Err(MeshError::OpenEdge(a, b));
            }
        }
        Ok(())
    }

    /// Full invariant check: closed, consistently outward, no zero-area faces.
    pub fn validate(&self) -> Result<(), MeshError> {
        self.check_closed()?;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            let scale = (b - a).norm().max((c - a).norm()).max(1e-300);
            if (b - a).cross(&(c - a)).norm() <= 1e-14 * scale * scale {
                return Err(MeshError::Degenerate(i));
            }
        }
        let v = self.signed_volume();
        if v <= 0.0 {
            return Err(MeshError::Inverted(v));
        }
        Ok(())
    }

    pub fn transformed(&self, m: &Matrix) -> Mesh {
        let normal_m = m
            .fixed_view::<3, 3>(0, 0)
            .try_inverse()
            .map(|inv| inv.transpose())
            .unwrap_or_else(nalgebra::Matrix3::identity);
        Mesh {
            vertices: self.vertices.iter().map(|p| m.transform_point(p)).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .iter()
                .map(|n| (normal_m * n).try_normalize(0.0).unwrap_or(*n))
                .collect(),
        }
    }

    /// Append another mesh, keeping its vertices separate.
    pub fn append(&mut self, other: &Mesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.normals.extend_from_slice(&other.normals);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|v| v + base)));
    }

    pub(crate) fn compute_normals(&mut self) {
        let mut acc = vec![Vector::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|v| self.vertices[v as usize]);
            let n = (b - a).cross(&(c - a));
            for &v in t {
                acc[v as usize] += n;
            }
        }
        self.normals = acc
            .into_iter()
            .map(|n| n.try_normalize(0.0).unwrap_or_else(Vector::z))
            .collect();
    }
}

/// Divergence-theorem volume of a closed mesh; negative for inward winding.
pub fn mesh_volume(m: &Mesh) -> Result<f64, MeshError> {
    m.check_closed()?;
    Ok(m.signed_volume())
}

/// Builds a mesh from keyed vertices, dropping triangles that collapse
/// because two corners share a key.
pub(crate) struct MeshBuilder<K> {
    keys: HashMap<K, u32>,
    mesh: Mesh,
}

impl<K: std::hash::Hash + Eq> MeshBuilder<K> {
    pub fn new() -> Self {
        MeshBuilder {
            keys: HashMap::new(),
            mesh: Mesh::default(),
        }
    }

    pub fn vertex(&mut self, key: K, p: impl FnOnce() -> Point) -> u32 {
        let mesh = &mut self.mesh;
        *self.keys.entry(key).or_insert_with(|| {
            mesh.vertices.push(p());
            (mesh.vertices.len() - 1) as u32
        })
    }

    pub fn triangle(&mut self, a: u32, b: u32, c: u32) {
        if a != b && b != c && a != c {
            self.mesh.triangles.push([a, b, c]);
        }
    }

    pub fn finish(mut self) -> Mesh {
        self.mesh.compute_normals();
        self.mesh
    }
}

/// Sweep a circular cross-section along a path with right-handed frames
/// `(u, v, tangent)`, capping both ends.
pub(crate) fn sweep_tube(centers: &[Point], frames: &[(Vector, Vector)], radius: f64, nseg: usize) -> Mesh {
    #[derive(Hash, PartialEq, Eq)]
    enum Key {
        Ring(usize, usize),
        Cap(usize),
    }
    let mut b = MeshBuilder::new();
    let ring = |b: &mut MeshBuilder<Key>, i: usize, j: usize| {
        let (u, v) = frames[i];
        let a = std::f64::consts::TAU * j as f64 / nseg as f64;
        b.vertex(Key::Ring(i, j % nseg), || centers[i] + radius * (a.cos() * u + a.sin() * v))
    };
    let last = centers.len() - 1;
    for i in 0..last {
        for j in 0..nseg {
            let a = ring(&mut b, i, j);
            let bb = ring(&mut b, i + 1, j);
            let c = ring(&mut b, i + 1, j + 1);
            let d = ring(&mut b, i, j + 1);
            b.triangle(a, d, c);
            b.triangle(a, c, bb);
        }
    }
    let start = b.vertex(Key::Cap(0), || centers[0]);
    let end = b.vertex(Key::Cap(last), || centers[last]);
    for j in 0..nseg {
        let (v0, v1) = (ring(&mut b, 0, j), ring(&mut b, 0, j + 1));
        b.triangle(start, v1, v0);
        let (w0, w1) = (ring(&mut b, last, j), ring(&mut b, last, j + 1));
        b.triangle(end, w0, w1);
    }
    b.finish()
}

/// Tube of the given radius around a polyline, using parallel-transported
/// frames. Returns `None` for fewer than two distinct points.
pub fn sweep_polyline(points: &[Point], radius: f64, nseg: usize) -> Option<Mesh> {
    let mut pts: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last().map_or(true, |q: &Point| (p - q).norm() > 1e-9) {
            pts.push(*p);
        }
    }
    if pts.len() < 2 || radius <= 0.0 || nseg < 3 {
        return None;
    }
    let n = pts.len();
    let tangents: Vec<Vector> = (0..n)
        .map(|i| {
            let prev = if i > 0 { (pts[i] - pts[i - 1]).normalize() } else { Vector::zeros() };
            let next = if i + 1 < n { (pts[i + 1] - pts[i]).normalize() } else { Vector::zeros() };
            (prev + next).try_normalize(1e-12).unwrap_or(if i + 1 < n { next } else { prev })
        })
        .collect();
    let t0 = tangents[0];
    let helper = if t0.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
    let mut u = (helper - t0 * helper.dot(&t0)).normalize();
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = tangents[i];
        if i > 0 {
            u = (u - t * u.dot(&t)).try_normalize(1e-12).unwrap_or(u);
        }
        let v = t.cross(&u);
        frames.push((u, v));
    }
    Some(sweep_tube(&pts, &frames, radius, nseg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> Mesh {
        let mut m = Mesh {
            vertices: vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(0.0, 0.0, 1.0),
            ],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
            normals: vec![],
        };
        m.compute_normals();
        m
    }

    #[test]
    fn tetra_volume() {
        let m = tetra();
        assert!(m.validate().is_ok());
        assert!((mesh_volume(&m).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn reversed_winding_is_negative_and_rejected() {
        let mut m = tetra();
        for t in &mut m.triangles {
            t.swap(1, 2);
        }
        assert!(mesh_volume(&m).unwrap() < 0.0);
        assert!(matches!(m.validate(), Err(MeshError::Inverted(_))));
    }

    #[test]
    fn open_mesh_rejected() {
        let mut m = tetra();
        m.triangles.pop();
        assert!(matches!(mesh_volume(&m), Err(MeshError::OpenEdge(..))));
    }

    #[test]
    fn polyline_tube_is_closed() {
        let pts = [
            Point::new(0.0, 0.0, 0.0),
            Point::new(10.0, 0.0, 0.0),
            Point::new(20.0, 5.0, 0.0),
            Point::new(25.0, 15.0, 3.0),
        ];
        let m = sweep_polyline(&pts, 1.0, 12).unwrap();
        m.validate().unwrap();
        assert!(sweep_polyline(&pts[..1], 1.0, 12).is_none());
    }
}
