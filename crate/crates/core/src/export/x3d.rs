use std::collections::HashSet;
use std::fmt::Write;

use super::{decompose, is_plain, num, nums};
use crate::scene::{CompiledScene, Geometry};

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn point_list<'a>(pts: impl Iterator<Item = &'a crate::geom::Point>) -> String {
    pts.map(|p| nums(&[p.x, p.y, p.z])).collect::<Vec<_>>().join(", ")
}

fn geometry_element(g: &Geometry, id: u32) -> String {
    match g {
        Geometry::Mesh(m) => {
            let idx: Vec<String> = m
                .triangles
                .iter()
                .map(|t| format!("{} {} {} -1", t[0], t[1], t[2]))
                .collect();
            format!(
                "<IndexedFaceSet DEF=\"G{id}\" solid=\"true\" coordIndex=\"{}\"><Coordinate point=\"{}\"/></IndexedFaceSet>",
                idx.join(" "),
                point_list(m.vertices.iter())
            )
        }
        Geometry::Lines(lines) => {
            let mut idx = Vec::new();
            let mut base = 0;
            for l in lines {
                idx.extend((base..base + l.len()).map(|i| i.to_string()));
                idx.push("-1".to_string());
                base += l.len();
            }
            format!(
                "<IndexedLineSet DEF=\"G{id}\" coordIndex=\"{}\"><Coordinate point=\"{}\"/></IndexedLineSet>",
                idx.join(" "),
                point_list(lines.iter().flatten())
            )
        }
        Geometry::Points(pts) => format!(
            "<PointSet DEF=\"G{id}\"><Coordinate point=\"{}\"/></PointSet>",
            point_list(pts.iter())
        ),
    }
}

fn element_name(g: &Geometry) -> &'static str {
    match g {
        Geometry::Mesh(_) => "IndexedFaceSet",
        Geometry::Lines(_) => "IndexedLineSet",
        Geometry::Points(_) => "PointSet",
    }
}

/// X3D (XML encoding) with the same instance layout and DEF/USE sharing as
/// the VRML export. Each Transform carries its path as metadata.
pub fn export_x3d(scene: &CompiledScene) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<X3D profile=\"Interchange\" version=\"3.3\">\n");
    out.push_str("  <Scene>\n");
    let mut defined = HashSet::new();
    for (i, inst) in scene.instances().iter().enumerate() {
        if !scene.is_visible(i) {
            continue;
        }
        let d = decompose(&inst.world);
        let (no_rot, unit_scale) = is_plain(&d);
        let _ = write!(out, "    <Transform translation=\"{}\"", nums(&d.translation));
        if !no_rot {
            let _ = write!(out, " rotation=\"{}\"", nums(&d.rotation));
        }
        if !unit_scale {
            let _ = write!(
                out,
                " scale=\"{}\" scaleOrientation=\"{}\"",
                nums(&d.scale),
                nums(&d.scale_orientation)
            );
        }
        out.push_str(">\n");
        let _ = writeln!(
            out,
            "      <MetadataString name=\"path\" value=\"{}\"/>",
            escape(&inst.path.join("/"))
        );
        out.push_str("      <Shape>\n");
        let g = scene.geometry(inst.geometry);
        if let Some(a) = scene.appearance(i) {
            let attr = if matches!(g, Geometry::Mesh(_)) { "diffuseColor" } else { "emissiveColor" };
            let _ = writeln!(
                out,
                "        <Appearance><Material {attr}=\"{}\" transparency=\"{}\"/></Appearance>",
                nums(&a.color[..3]),
                num(a.transparency)
            );
        }
        let id = inst.geometry.0;
        if defined.insert(id) {
            let _ = writeln!(out, "        {}", geometry_element(g, id));
        } else {
            let _ = writeln!(out, "        <{} USE=\"G{id}\"/>", element_name(g));
        }
        out.push_str("      </Shape>\n");
        out.push_str("    </Transform>\n");
    }
    out.push_str("  </Scene>\n</X3D>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::test_scenes::*;
    use super::super::export_vrml;
    use super::*;

    fn count(xml: &str, tag: &str) -> usize {
        let doc = roxmltree::Document::parse(xml).unwrap();
        doc.descendants().filter(|n| n.has_tag_name(tag)).count()
    }

    #[test]
    fn single_box_is_well_formed() {
        let text = export_x3d(&single_box());
        assert_eq!(count(&text, "IndexedFaceSet"), 1);
        assert_eq!(count(&text, "Shape"), 1);
    }

    #[test]
    fn empty_scene_has_empty_scene_element() {
        let text = export_x3d(&empty());
        let doc = roxmltree::Document::parse(&text).unwrap();
        let scene = doc.descendants().find(|n| n.has_tag_name("Scene")).unwrap();
        assert_eq!(scene.children().filter(|n| n.is_element()).count(), 0);
    }

    #[test]
    fn instance_count_matches_vrml() {
        let s = boxes(7, 1);
        let x = export_x3d(&s);
        assert_eq!(count(&x, "Shape"), export_vrml(&s).matches("Shape {").count());
        let doc = roxmltree::Document::parse(&x).unwrap();
        let uses = doc.descendants().filter(|n| n.attribute("USE").is_some()).count();
        assert_eq!(uses, 6);
    }

    #[test]
    fn paths_are_escaped() {
        assert_eq!(escape(r#"a<b>&"c'"#), "a&lt;b&gt;&amp;&quot;c&apos;");
    }
}
