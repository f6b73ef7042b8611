use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AppId, Appearance, Bvh, DrawMode, GeomId, Geometry, Node, NodeId, SceneGraph, ShapeNode, VolumeInfo};
use crate::geom::{Aabb, Matrix, Point};

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum MutationError {
    #[error("no volume at path `{path}`")]
    UnknownPath { path: String },
    #[error("refused: {reason}")]
    Refused { reason: String },
    #[error("invalid request: {reason}")]
    Invalid { reason: String },
}

/// Partial appearance update; absent fields are left unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppearanceDelta {
    pub color: Option<[f64; 3]>,
    pub transparency: Option<f64>,
    pub mode: Option<DrawMode>,
    pub visible: Option<bool>,
}

/// One drawn shape with its resolved world placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub node: NodeId,
    pub geometry: GeomId,
    pub appearance: Option<AppId>,
    pub volume: usize,
    pub pickable: bool,
    pub path: Vec<String>,
    /// Product of the transform chain as built.
    pub nominal: Matrix,
    /// World-frame correction applied on top of `nominal`.
    pub calibration: Matrix,
    pub world: Matrix,
    pub inverse: Matrix,
    pub bounds: Aabb,
}

/// Bytes charged per item by the memory estimate.
pub const BYTES_PER_MESH_VERTEX: usize = 48;
pub const BYTES_PER_LINE_VERTEX: usize = 24;
pub const BYTES_PER_TRIANGLE: usize = 12;
pub const BYTES_PER_NODE: usize = 64;
pub const BYTES_PER_INSTANCE: usize = 176;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneStats {
    pub nodes: usize,
    pub instances: usize,
    pub distinct_geometries: usize,
    pub shared_groups: usize,
    pub appearances: usize,
    pub triangles_stored: usize,
    pub triangles_rendered: usize,
    pub memory_bytes: usize,
    pub optimization: u8,
    pub quality: u8,
    pub interactivity: u8,
    pub graphical: bool,
}

impl fmt::Display for SceneStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 12] = [
            ("nodes", self.nodes.to_string()),
            ("instances", self.instances.to_string()),
            ("distinct_geometries", self.distinct_geometries.to_string()),
            ("shared_groups", self.shared_groups.to_string()),
            ("appearances", self.appearances.to_string()),
            ("triangles_stored", self.triangles_stored.to_string()),
            ("triangles_rendered", self.triangles_rendered.to_string()),
            ("memory_bytes", self.memory_bytes.to_string()),
            ("optimization", self.optimization.to_string()),
            ("quality", self.quality.to_string()),
            ("interactivity", self.interactivity.to_string()),
            ("graphical", self.graphical.to_string()),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<20} {v}")?;
        }
        writeln!(
            f,
            "# memory_bytes = {BYTES_PER_MESH_VERTEX}*mesh_vertices + {BYTES_PER_LINE_VERTEX}*line_point_vertices + {BYTES_PER_TRIANGLE}*triangles_stored + {BYTES_PER_NODE}*nodes + {BYTES_PER_INSTANCE}*instances"
        )
    }
}

/// Depth-first walk over every shape reachable from the root, with its
/// accumulated transform and transform-label path.
pub(crate) fn walk(g: &SceneGraph, mut f: impl FnMut(&ShapeNode, &Matrix, &[String])) {
    walk_ids(g, |_, s, m, p| f(s, m, p));
}

fn walk_ids(g: &SceneGraph, mut f: impl FnMut(NodeId, &ShapeNode, &Matrix, &[String])) {
    let mut path = Vec::new();
    fn rec(
        g: &SceneGraph,
        id: NodeId,
        m: &Matrix,
        path: &mut Vec<String>,
        f: &mut dyn FnMut(NodeId, &ShapeNode, &Matrix, &[String]),
    ) {
        match g.node(id) {
            Node::Group { children, .. } => {
                for &c in children {
                    rec(g, c, m, path, f);
                }
            }
            Node::Transform { label, matrix, child } => {
                path.push(label.clone());
                rec(g, *child, &(m * matrix), path, f);
                path.pop();
            }
            Node::SharedRef(sid) => rec(g, g.shared[sid.0 as usize].root, m, path, f),
            Node::Shape(s) => f(id, s, m, path),
        }
    }
    rec(g, g.root, &Matrix::identity(), &mut path, &mut f);
}

/// Immutable topology plus the few cells that may change: appearances
/// (interactivity >= 1) and calibration transforms (interactivity 2).
#[derive(Debug, Clone)]
pub struct CompiledScene {
    graph: SceneGraph,
    instances: Vec<Instance>,
    bvh: Bvh,
    stats: SceneStats,
    local_bounds: Vec<Aabb>,
}

pub fn compile(graph: SceneGraph) -> CompiledScene {
    let local_bounds: Vec<Aabb> = graph
        .geometries
        .iter()
        .map(Geometry::bounds)
        .collect();
    let mut instances = Vec::new();
    walk_ids(&graph, |node, s, m, path| {
        let mut lb = local_bounds[s.geometry.0 as usize];
        if let Some(solid) = graph.volumes[s.volume].solid() {
            lb = lb.union(&solid.aabb());
        }
        instances.push(Instance {
            node,
            geometry: s.geometry,
            appearance: s.appearance,
            volume: s.volume,
            pickable: s.pickable,
            path: path.to_vec(),
            nominal: *m,
            calibration: Matrix::identity(),
            world: *m,
            inverse: m.try_inverse().unwrap_or_else(Matrix::identity),
            bounds: lb.transformed(m),
        });
    });
    let bvh = Bvh::build(&instances.iter().map(|i| i.bounds).collect::<Vec<_>>());
    let stats = compute_stats(&graph, &instances);
    CompiledScene {
        graph,
        instances,
        bvh,
        stats,
        local_bounds,
    }
}

fn compute_stats(g: &SceneGraph, instances: &[Instance]) -> SceneStats {
    let mut mesh_vertices = 0;
    let mut other_vertices = 0;
    for geom in &g.geometries {
        match geom {
            Geometry::Mesh(m) => mesh_vertices += m.vertices.len(),
            other => other_vertices += other.vertex_count(),
        }
    }
    let triangles_stored: usize = g.geometries.iter().map(Geometry::triangle_count).sum();
    let triangles_rendered = instances
        .iter()
        .map(|i| g.geometries[i.geometry.0 as usize].triangle_count())
        .sum();
    SceneStats {
        nodes: g.nodes.len(),
        instances: instances.len(),
        distinct_geometries: g.geometries.len(),
        shared_groups: g.shared.len(),
        appearances: g.appearances.len(),
        triangles_stored,
        triangles_rendered,
        memory_bytes: BYTES_PER_MESH_VERTEX * mesh_vertices
            + BYTES_PER_LINE_VERTEX * other_vertices
            + BYTES_PER_TRIANGLE * triangles_stored
            + BYTES_PER_NODE * g.nodes.len()
            + BYTES_PER_INSTANCE * instances.len(),
        optimization: g.options.optimization,
        quality: g.options.quality.level(),
        interactivity: g.options.effective_interactivity(),
        graphical: g.options.graphical,
    }
}

fn path_string(path: &[String]) -> String {
    path.join("/")
}

impl CompiledScene {
    pub fn graph(&self) -> &SceneGraph {
        &self.graph
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn stats(&self) -> &SceneStats {
        &self.stats
    }

    pub fn geometry(&self, id: GeomId) -> &Geometry {
        &self.graph.geometries[id.0 as usize]
    }

    pub fn volume(&self, instance: usize) -> &VolumeInfo {
        &self.graph.volumes[self.instances[instance].volume]
    }

    pub fn appearance(&self, instance: usize) -> Option<&Appearance> {
        self.instances[instance]
            .appearance
            .map(|a| &self.graph.appearances[a.0 as usize])
    }

    pub fn is_visible(&self, instance: usize) -> bool {
        self.appearance(instance).map_or(true, |a| a.visible)
    }

    /// Local-frame bounds of an instance's geometry.
    pub fn local_bounds(&self, instance: usize) -> Aabb {
        self.local_bounds[self.instances[instance].geometry.0 as usize]
    }

    pub fn find(&self, path: &[String]) -> Option<usize> {
        self.instances.iter().position(|i| i.path == path)
    }

    /// Instances at or below a path.
    pub fn instances_under(&self, path: &[String]) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.path.starts_with(path))
            .map(|(k, _)| k)
            .collect()
    }

    fn resolve(&self, path: &[String]) -> Result<Vec<usize>, MutationError> {
        let found = self.instances_under(path);
        if found.is_empty() {
            Err(MutationError::UnknownPath {
                path: path_string(path),
            })
        } else {
            Ok(found)
        }
    }

    fn identity_refusal(&self) -> Option<MutationError> {
        (self.graph.options.optimization >= 3).then(|| MutationError::Refused {
            reason: "optimization level 3 discards identities: volumes do not exist individually and cannot be manipulated"
                .into(),
        })
    }

    fn check_appearance_allowed(&self) -> Result<(), MutationError> {
        if let Some(e) = self.identity_refusal() {
            return Err(e);
        }
        if !self.graph.options.graphical {
            return Err(MutationError::Refused {
                reason: "scene was built without visual attributes (graphical = false)".into(),
            });
        }
        if self.graph.options.effective_interactivity() < 1 {
            return Err(MutationError::Refused {
                reason: "interactivity level 0 does not allow appearance changes".into(),
            });
        }
        Ok(())
    }

    /// Update the appearance cells of every shape under `path`. Shapes
    /// inside a shared group share cells with the group's other references.
    pub fn set_appearance(&mut self, path: &[String], delta: &AppearanceDelta) -> Result<(), MutationError> {
        self.check_appearance_allowed()?;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if delta.color.is_some_and(|c| !c.iter().all(|&v| unit(v))) || delta.transparency.is_some_and(|t| !unit(t)) {
            return Err(MutationError::Invalid {
                reason: "color components and transparency must lie in [0, 1]".into(),
            });
        }
        let found = self.resolve(path)?;
        let mut cells: Vec<AppId> = found.iter().filter_map(|&i| self.instances[i].appearance).collect();
        cells.sort();
        cells.dedup();
        for id in cells {
            let a = &mut self.graph.appearances[id.0 as usize];
            if let Some(c) = delta.color {
                a.color = [c[0], c[1], c[2], a.color[3]];
            }
            if let Some(t) = delta.transparency {
                a.transparency = t;
                a.color[3] = 1.0 - t;
            }
            if let Some(m) = delta.mode {
                a.mode = m;
            }
            if let Some(v) = delta.visible {
                a.visible = v;
            }
        }
        Ok(())
    }

    pub fn toggle_visibility(&mut self, path: &[String], visible: bool) -> Result<(), MutationError> {
        self.set_appearance(
            path,
            &AppearanceDelta {
                visible: Some(visible),
                ..AppearanceDelta::default()
            },
        )
    }

    /// Apply a world-frame calibration move to every instance under `path`
    /// and refit the hierarchy. Needs effective interactivity 2.
    pub fn set_transform(&mut self, path: &[String], delta: &Matrix) -> Result<(), MutationError> {
        if let Some(e) = self.identity_refusal() {
            return Err(e);
        }
        let eff = self.graph.options.effective_interactivity();
        if eff < 2 {
            return Err(MutationError::Refused {
                reason: format!(
                    "calibration needs interactivity 2; effective interactivity is {eff} at optimization {}",
                    self.graph.options.optimization
                ),
            });
        }
        if delta.try_inverse().is_none() {
            return Err(MutationError::Invalid {
                reason: "calibration matrix is singular".into(),
            });
        }
        let found = self.resolve(path)?;
        for i in found {
            let lb = {
                let inst = &self.instances[i];
                let mut lb = self.local_bounds[inst.geometry.0 as usize];
                if let Some(s) = self.graph.volumes[inst.volume].solid() {
                    lb = lb.union(&s.aabb());
                }
                lb
            };
            let inst = &mut self.instances[i];
            inst.calibration = delta * inst.calibration;
            inst.world = inst.calibration * inst.nominal;
            inst.inverse = inst.world.try_inverse().unwrap_or_else(Matrix::identity);
            inst.bounds = lb.transformed(&inst.world);
            self.bvh.refit(i, inst.bounds);
        }
        Ok(())
    }

    /// World-space triangles of every mesh instance, in instance order.
    pub fn world_triangles(&self) -> Vec<[Point; 3]> {
        let mut out = Vec::new();
        for inst in &self.instances {
            if let Geometry::Mesh(m) = self.geometry(inst.geometry) {
                for t in &m.triangles {
                    out.push(t.map(|v| inst.world.transform_point(&m.vertices[v as usize])));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build, BuildOptions};
    use super::*;
    use crate::geom::translation;
    use crate::model::parse_document;

    fn nested() -> SceneGraph {
        let doc = parse_document(
            r#"<AGDD world="w">
              <box name="b" x="1" y="1" z="1"/>
              <composition name="inner"><posXYZ volume="b" XYZ="0;0;5"/></composition>
              <composition name="w"><posXYZ volume="inner" XYZ="10;0;0"/><posXYZ volume="b"/></composition>
            </AGDD>"#,
        )
        .unwrap()
        .document;
        build(
            &doc,
            &BuildOptions {
                optimization: 0,
                interactivity: 2,
                ..BuildOptions::default()
            },
        )
        .unwrap()
    }

    fn p(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn nested_transforms_compose() {
        let c = compile(nested());
        assert_eq!(c.instances().len(), 2);
        let i = c.find(&p(&["w", "inner", "b"])).unwrap();
        let expected = translation([10.0, 0.0, 0.0]) * translation([0.0, 0.0, 5.0]);
        assert_eq!(c.instances()[i].world, expected);
        assert_eq!(c.bvh().leaf_count(), 2);
        assert_eq!(c.stats().instances, 2);
        assert_eq!(c.stats().triangles_rendered, 24);
    }

    #[test]
    fn visibility_is_an_involution() {
        let mut c = compile(nested());
        let before: Vec<bool> = (0..2).map(|i| c.is_visible(i)).collect();
        c.toggle_visibility(&p(&["w", "inner"]), false).unwrap();
        let i = c.find(&p(&["w", "inner", "b"])).unwrap();
        assert!(!c.is_visible(i));
        c.toggle_visibility(&p(&["w", "inner"]), true).unwrap();
        assert_eq!(before, (0..2).map(|i| c.is_visible(i)).collect::<Vec<_>>());
        assert!(matches!(
            c.toggle_visibility(&p(&["w", "nope"]), false),
            Err(MutationError::UnknownPath { .. })
        ));
    }

    #[test]
    fn calibration_moves_and_identity_is_noop() {
        let mut c = compile(nested());
        let before = c.instances().to_vec();
        c.set_transform(&p(&["w"]), &Matrix::identity()).unwrap();
        assert_eq!(c.instances(), &before[..]);
        c.set_transform(&p(&["w", "inner"]), &translation([0.0, 3.0, 0.0])).unwrap();
        let i = c.find(&p(&["w", "inner", "b"])).unwrap();
        assert_eq!(c.instances()[i].world[(1, 3)], 3.0);
        assert_eq!(c.instances()[i].bounds.min[1], 2.5);
    }

    #[test]
    fn stats_text_is_aligned() {
        let c = compile(nested());
        let text = c.stats().to_string();
        assert!(text.lines().next().unwrap().starts_with("nodes                "));
        assert!(text.contains("memory_bytes = 48*mesh_vertices"));
    }
}
