use std::collections::HashSet;
use std::fmt::Write;

use super::{decompose, is_plain, num, nums};
use crate::scene::{CompiledScene, Geometry};

fn coords(out: &mut String, pts: impl Iterator<Item = [f64; 3]>, indent: &str) {
    let _ = writeln!(out, "{indent}coord Coordinate {{ point [");
    for p in pts {
        let _ = writeln!(out, "{indent}  {},", nums(&p));
    }
    let _ = writeln!(out, "{indent}] }}");
}

fn geometry_body(out: &mut String, g: &Geometry, indent: &str) {
    match g {
        Geometry::Mesh(m) => {
            let _ = writeln!(out, "IndexedFaceSet {{");
            let _ = writeln!(out, "{indent}  solid TRUE");
            coords(out, m.vertices.iter().map(|v| [v.x, v.y, v.z]), &format!("{indent}  "));
            let _ = writeln!(out, "{indent}  coordIndex [");
            for t in &m.triangles {
                let _ = writeln!(out, "{indent}    {} {} {} -1,", t[0], t[1], t[2]);
            }
            let _ = writeln!(out, "{indent}  ]");
        }
        Geometry::Lines(lines) => {
            let _ = writeln!(out, "IndexedLineSet {{");
            coords(out, lines.iter().flatten().map(|v| [v.x, v.y, v.z]), &format!("{indent}  "));
            let _ = writeln!(out, "{indent}  coordIndex [");
            let mut base = 0;
            for l in lines {
                let idx: Vec<String> = (base..base + l.len()).map(|i| i.to_string()).collect();
                let _ = writeln!(out, "{indent}    {} -1,", idx.join(" "));
                base += l.len();
            }
            let _ = writeln!(out, "{indent}  ]");
        }
        Geometry::Points(pts) => {
            let _ = writeln!(out, "PointSet {{");
            coords(out, pts.iter().map(|v| [v.x, v.y, v.z]), &format!("{indent}  "));
        }
    }
    let _ = writeln!(out, "{indent}}}");
}

/// VRML97 text with one Transform per visible instance. The first use of
/// a geometry is `DEF G<id>`, later uses are `USE G<id>`.
pub fn export_vrml(scene: &CompiledScene) -> String {
    let mut out = String::from("#VRML V2.0 utf8\n");
    let visible: Vec<usize> = (0..scene.instances().len()).filter(|&i| scene.is_visible(i)).collect();
    let _ = writeln!(
        out,
        "# {} visible instances, {} geometries",
        visible.len(),
        scene.stats().distinct_geometries
    );
    let mut defined = HashSet::new();
    for i in visible {
        let inst = &scene.instances()[i];
        let d = decompose(&inst.world);
        let _ = writeln!(out, "# {}", inst.path.join("/"));
        let _ = writeln!(out, "Transform {{");
        let _ = writeln!(out, "  translation {}", nums(&d.translation));
        let (no_rot, unit_scale) = is_plain(&d);
        if !no_rot {
            let _ = writeln!(out, "  rotation {}", nums(&d.rotation));
        }
        if !unit_scale {
            let _ = writeln!(out, "  scale {}", nums(&d.scale));
            let _ = writeln!(out, "  scaleOrientation {}", nums(&d.scale_orientation));
        }
        let _ = writeln!(out, "  children [");
        let _ = writeln!(out, "    Shape {{");
        let g = scene.geometry(inst.geometry);
        if let Some(a) = scene.appearance(i) {
            let rgb = nums(&a.color[..3]);
            let colors = match g {
                Geometry::Mesh(_) => format!("diffuseColor {rgb}"),
                _ => format!("emissiveColor {rgb}"),
            };
            let _ = writeln!(
                out,
                "      appearance Appearance {{ material Material {{ {colors} transparency {} }} }}",
                num(a.transparency)
            );
        }
        let id = inst.geometry.0;
        if defined.insert(id) {
            let _ = write!(out, "      geometry DEF G{id} ");
            geometry_body(&mut out, g, "      ");
        } else {
            let _ = writeln!(out, "      geometry USE G{id}");
        }
        let _ = writeln!(out, "    }}");
        let _ = writeln!(out, "  ]");
        let _ = writeln!(out, "}}");
    }
    out
}
