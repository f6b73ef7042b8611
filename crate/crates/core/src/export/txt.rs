use std::fmt::Write;

use super::{decompose, is_plain, nums};
use crate::scene::{CompiledScene, Node, NodeId, SceneGraph};

fn transform_summary(m: &crate::geom::Matrix) -> String {
    let d = decompose(m);
    let (no_rot, unit_scale) = is_plain(&d);
    let mut s = format!("t=({})", nums(&d.translation));
    if !no_rot {
        let r = d.rotation;
        let _ = write!(s, " r=({} {}deg)", nums(&r[..3]), nums(&[r[3].to_degrees()]));
    }
    if !unit_scale {
        let _ = write!(s, " s=({})", nums(&d.scale));
    }
    s
}

fn dump(out: &mut String, scene: &CompiledScene, g: &SceneGraph, id: NodeId, depth: usize) {
    let pad = "  ".repeat(depth);
    match g.node(id) {
        Node::Group { name, children } => {
            let _ = writeln!(out, "{pad}group {name}");
            for &c in children {
                dump(out, scene, g, c, depth + 1);
            }
        }
        Node::Transform { label, matrix, child } => {
            let _ = writeln!(out, "{pad}transform {label} {}", transform_summary(matrix));
            dump(out, scene, g, *child, depth + 1);
        }
        Node::SharedRef(s) => {
            let _ = writeln!(out, "{pad}ref shared={} ({})", s.0, g.shared[s.0 as usize].name);
        }
        Node::Shape(s) => {
            let geom = &g.geometries[s.geometry.0 as usize];
            let app = s.appearance.map_or("-".to_string(), |a| a.0.to_string());
            let hidden = s
                .appearance
                .is_some_and(|a| !g.appearances[a.0 as usize].visible);
            let _ = writeln!(
                out,
                "{pad}shape {} geom={} app={app} kind={} tris={} material={}{}",
                s.name,
                s.geometry.0,
                geom.kind(),
                geom.triangle_count(),
                s.material,
                if hidden { " hidden" } else { "" }
            );
        }
    }
}

/// Indented dump of the scene graph, one line per node, followed by the
/// shared groups when there are any.
pub fn export_txt(scene: &CompiledScene) -> String {
    let g = scene.graph();
    let mut out = String::new();
    dump(&mut out, scene, g, g.root, 0);
    if !g.shared.is_empty() {
        out.push_str("shared groups:\n");
        for (i, sg) in g.shared.iter().enumerate() {
            let _ = writeln!(out, "  shared {i} {}", sg.name);
            dump(&mut out, scene, g, sg.root, 2);
        }
    }
    out
}
