use serde::{Deserialize, Serialize};

use crate::scene::{Appearance, CompiledScene, Geometry, SceneStats};

pub const WIRE_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGeometry {
    /// `mesh`, `lines` or `points`.
    pub kind: String,
    /// Flat `x y z` triples, mm.
    pub vertices: Vec<f64>,
    /// Flat vertex index triples (meshes only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triangles: Vec<u32>,
    /// Vertex index runs (lines only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polylines: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireInstance {
    pub geom: u32,
    pub app: Option<u32>,
    /// Row-major 4x4 world matrix.
    pub matrix: [f64; 16],
    pub path: Vec<String>,
    pub visible: bool,
    pub pickable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTree {
    pub name: String,
    /// Instance drawn at exactly this path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
    #[serde(default)]
    pub children: Vec<WireTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWireDocument {
    pub version: String,
    pub geometries: Vec<WireGeometry>,
    pub appearances: Vec<Appearance>,
    pub instances: Vec<WireInstance>,
    pub tree: WireTree,
    pub stats: SceneStats,
}

fn wire_geometry(g: &Geometry) -> WireGeometry {
    let flat = |pts: &mut dyn Iterator<Item = &crate::geom::Point>| pts.flat_map(|p| [p.x, p.y, p.z]).collect();
    match g {
        Geometry::Mesh(m) => WireGeometry {
            kind: "mesh".into(),
            vertices: flat(&mut m.vertices.iter()),
            triangles: m.triangles.iter().flatten().copied().collect(),
            polylines: Vec::new(),
        },
        Geometry::Lines(lines) => {
            let mut base = 0u32;
            let polylines = lines
                .iter()
                .map(|l| {
                    let run = (base..base + l.len() as u32).collect();
                    base += l.len() as u32;
                    run
                })
                .collect();
            WireGeometry {
                kind: "lines".into(),
                vertices: flat(&mut lines.iter().flatten()),
                triangles: Vec::new(),
                polylines,
            }
        }
        Geometry::Points(p) => WireGeometry {
            kind: "points".into(),
            vertices: flat(&mut p.iter()),
            triangles: Vec::new(),
            polylines: Vec::new(),
        },
    }
}

/// Name hierarchy rooted at the scene's root group, covering every
/// instance path.
pub fn scene_tree(scene: &CompiledScene) -> WireTree {
    let root_name = match scene.graph().node(scene.graph().root) {
        crate::scene::Node::Group { name, .. } => name.clone(),
        _ => "world".into(),
    };
    let mut root = WireTree {
        name: root_name,
        instance: None,
        children: Vec::new(),
    };
    for (i, inst) in scene.instances().iter().enumerate() {
        let mut node = &mut root;
        for label in &inst.path {
            let k = match node.children.iter().position(|c| &c.name == label) {
                Some(k) => k,
                None => {
                    node.children.push(WireTree {
                        name: label.clone(),
                        instance: None,
                        children: Vec::new(),
                    });
                    node.children.len() - 1
                }
            };
            node = &mut node.children[k];
        }
        node.instance = Some(i);
    }
    root
}

pub fn scene_wire(scene: &CompiledScene) -> SceneWireDocument {
    let g = scene.graph();
    SceneWireDocument {
        version: WIRE_VERSION.into(),
        geometries: g.geometries.iter().map(wire_geometry).collect(),
        appearances: g.appearances.clone(),
        instances: scene
            .instances()
            .iter()
            .enumerate()
            .map(|(i, inst)| {
                let mut matrix = [0.0; 16];
                for r in 0..4 {
                    for c in 0..4 {
                        matrix[4 * r + c] = inst.world[(r, c)];
                    }
                }
                WireInstance {
                    geom: inst.geometry.0,
                    app: inst.appearance.map(|a| a.0),
                    matrix,
                    path: inst.path.clone(),
                    visible: scene.is_visible(i),
                    pickable: inst.pickable,
                }
            })
            .collect(),
        tree: scene_tree(scene),
        stats: scene.stats().clone(),
    }
}

/// The wire document as compact JSON. Floats are written in shortest
/// round-trip form, so parsing gives back the exact tables.
pub fn export_scene_wire(scene: &CompiledScene) -> String {
    serde_json::to_string(&scene_wire(scene)).expect("wire document serializes")
}

#[cfg(test)]
mod tests {
    use super::super::test_scenes::*;
    use super::*;

    #[test]
    fn empty_and_shared() {
        let e = scene_wire(&empty());
        assert_eq!(e.version, "1");
        assert!(e.instances.is_empty());
        let w = scene_wire(&boxes(1000, 1));
        assert_eq!(w.geometries.len(), 1);
        assert_eq!(w.instances.len(), 1000);
        assert_eq!(&w.stats, boxes(1000, 1).stats());
    }

    #[test]
    fn round_trip_is_exact() {
        let s = scene(
            r#"<AGDD world="w"><tube name="t" rmin="1.1" rmax="2.3" zhalf="0.7"/>
               <composition name="w"><posXYZ volume="t" XYZ="0.1;0.2;0.3" rot="13;27;41"/></composition></AGDD>"#,
            Default::default(),
        );
        let text = export_scene_wire(&s);
        let back: SceneWireDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scene_wire(&s));
        assert_eq!(text, export_scene_wire(&s));
    }

    #[test]
    fn tree_covers_paths() {
        let w = scene_wire(&boxes(3, 1));
        assert_eq!(w.tree.name, "world");
        let names: Vec<&str> = w.tree.children[0].children.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["b#0", "b#1", "b#2"]);
        assert_eq!(w.tree.children[0].children[2].instance, Some(2));
    }
}
