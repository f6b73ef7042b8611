//! Exporters (VRML, X3D, TXT, wire JSON) and document converters.
//!
//! Text numbers use 9 significant digits so output is byte-stable.

mod convert;
mod txt;
mod vrml;
mod wire;
mod x3d;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use crate::geom::{fmt_g9, Matrix, Vector};
use crate::scene::CompiledScene;

pub use convert::{convert_v4_to_v6, convert_v6_to_v4, ConvertError};
pub use txt::export_txt;
pub use vrml::export_vrml;
pub use wire::{export_scene_wire, scene_wire, scene_tree, SceneWireDocument, WireGeometry, WireInstance, WireTree};
pub use x3d::export_x3d;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Vrml,
    X3d,
    Txt,
    Wire,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vrml" | "wrl" => Ok(ExportFormat::Vrml),
            "x3d" => Ok(ExportFormat::X3d),
            "txt" => Ok(ExportFormat::Txt),
            "wire" | "json" => Ok(ExportFormat::Wire),
            _ => Err(format!("unknown export format `{s}` (expected vrml, x3d, txt or wire)")),
        }
    }
}

pub fn export(scene: &CompiledScene, format: ExportFormat) -> String {
    match format {
        ExportFormat::Vrml => export_vrml(scene),
        ExportFormat::X3d => export_x3d(scene),
        ExportFormat::Txt => export_txt(scene),
        ExportFormat::Wire => export_scene_wire(scene),
    }
}

/// Format a number, snapping values below 1e-12 to zero.
pub(crate) fn num(v: f64) -> String {
    fmt_g9(if v.abs() < 1e-12 { 0.0 } else { v })
}

pub(crate) fn nums(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

/// Affine matrix split into the fields of a VRML/X3D Transform:
/// `M = T * R * SR * S * SR^-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Decomposed {
    pub translation: [f64; 3],
    /// Axis and angle in radians.
    pub rotation: [f64; 4],
    pub scale: [f64; 3],
    pub scale_orientation: [f64; 4],
}

fn axis_angle(r: &Matrix3<f64>) -> [f64; 4] {
    match UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).axis_angle() {
        Some((axis, angle)) => [axis.x, axis.y, axis.z, angle],
        None => [0.0, 0.0, 1.0, 0.0],
    }
}

pub(crate) fn decompose(m: &Matrix) -> Decomposed {
    let a: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let translation = [m[(0, 3)], m[(1, 3)], m[(2, 3)]];
    if (a.transpose() * a - Matrix3::identity()).amax() < 1e-12 && a.determinant() > 0.0 {
        return Decomposed {
            translation,
            rotation: axis_angle(&a),
            scale: [1.0; 3],
            scale_orientation: [0.0, 0.0, 1.0, 0.0],
        };
    }
    let svd = a.svd(true, true);
    let (mut u, mut v) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested").transpose());
    let mut s: Vector = svd.singular_values;
    if v.determinant() < 0.0 {
        v.set_column(2, &-v.column(2));
        u.set_column(2, &-u.column(2));
    }
    if u.determinant() < 0.0 {
        u.set_column(2, &-u.column(2));
        s[2] = -s[2];
    }
    Decomposed {
        translation,
        rotation: axis_angle(&(u * v.transpose())),
        scale: [s[0], s[1], s[2]],
        scale_orientation: axis_angle(&v),
    }
}

pub(crate) fn is_plain(d: &Decomposed) -> (bool, bool) {
    (d.rotation[3] == 0.0, d.scale == [1.0; 3])
}
