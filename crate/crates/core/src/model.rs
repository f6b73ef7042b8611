//! Typed binding of the detector-description XML.
//!
//! Every recognised element maps onto a Rust type whose fields are the
//! element's attributes. Attributes of v6 documents may hold formula text;
//! those are kept verbatim as [`Param::Expr`] until the expression stage
//! replaces them with numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::geom::{cos_deg, sin_deg};
use crate::solids::{Shape, Solid, ZPlane};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed XML at {line}:{column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("line {line}: <{element}> is missing attribute `{attribute}`")]
    MissingAttribute {
        element: String,
        attribute: &'static str,
        line: u32,
    },
    #[error("line {line}: attribute `{attribute}` needs {expected} ';'-separated values, got `{value}`")]
    BadVector {
        attribute: String,
        expected: usize,
        value: String,
        line: u32,
    },
    #[error("line {line}: bad value `{value}` for `{attribute}`")]
    BadValue {
        attribute: String,
        value: String,
        line: u32,
    },
    #[error("line {line}: name `{name}` defined twice")]
    Duplicate { name: String, line: u32 },
    #[error("{context}: `{text}` is not a number (expand the document first)")]
    NotNumeric { context: String, text: String },
    #[error("placement of `{volume}`: copy count {value} must be an integer >= 1")]
    BadCopyCount { volume: String, value: f64 },
}

/// Document dialect: v4 is fully explicit, v6 allows formulas and
/// externally filled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Version {
    V4,
    V6,
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Version::V4 => "v4",
            Version::V6 => "v6",
        })
    }
}

/// An attribute value: a number, or formula text awaiting expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Num(f64),
    Expr(String),
}

impl Param {
    pub fn parse(text: &str) -> Param {
        let t = text.trim();
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Param::Num(v),
            _ => Param::Expr(t.to_string()),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Param::Num(v) => Some(*v),
            Param::Expr(_) => None,
        }
    }

    pub fn is_expr(&self) -> bool {
        matches!(self, Param::Expr(_))
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Num(v)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Num(v) => write!(f, "{v}"),
            Param::Expr(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// g/cm³
    pub density: Param,
    pub color: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolidDef {
    pub name: String,
    pub shape: Shape<Param>,
    pub material: Option<String>,
}

impl SolidDef {
    /// The shape with every parameter numeric, if it already is.
    pub fn numeric_shape(&self) -> Result<Solid, ModelError> {
        self.shape.try_map(|p| numeric(p, &self.name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Single {
        volume: String,
        translation: [Param; 3],
        rotation: [Param; 3],
    },
    MultiPhi {
        volume: String,
        ncopy: Param,
        phi0: Param,
        dphi: Param,
        radius: Param,
    },
    MultiZ {
        volume: String,
        ncopy: Param,
        z0: Param,
        dz: Param,
    },
}

impl Placement {
    pub fn volume(&self) -> &str {
        match self {
            Placement::Single { volume, .. }
            | Placement::MultiPhi { volume, .. }
            | Placement::MultiZ { volume, .. } => volume,
        }
    }

    pub fn single(volume: &str, translation: [f64; 3], rotation: [f64; 3]) -> Placement {
        Placement::Single {
            volume: volume.to_string(),
            translation: translation.map(Param::Num),
            rotation: rotation.map(Param::Num),
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            Placement::Single {
                translation,
                rotation,
                ..
            } => translation.iter().chain(rotation.iter()).collect(),
            Placement::MultiPhi {
                ncopy,
                phi0,
                dphi,
                radius,
                ..
            } => vec![ncopy, phi0, dphi, radius],
            Placement::MultiZ { ncopy, z0, dz, .. } => vec![ncopy, z0, dz],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Placement::Single {
                translation,
                rotation,
                ..
            } => translation.iter_mut().chain(rotation.iter_mut()).collect(),
            Placement::MultiPhi {
                ncopy,
                phi0,
                dphi,
                radius,
                ..
            } => vec![ncopy, phi0, dphi, radius],
            Placement::MultiZ { ncopy, z0, dz, .. } => vec![ncopy, z0, dz],
        }
    }
}

/// A named group of placed volumes, optionally with an envelope solid that
/// acts as the mother volume of its daughters.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub name: String,
    pub envelope: Option<String>,
    pub placements: Vec<Placement>,
}

/// Reference to a parameter held by an external source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParamRef {
    pub connection: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Definition {
    Var { name: String, value: Param },
    Array { name: String, values: Vec<Param> },
    Table { name: String, rows: Vec<Vec<Param>> },
    /// `<var connection=".." name=".."/>`, resolved by parameter filling.
    Connected(ParamRef),
}

impl Definition {
    pub fn name(&self) -> &str {
        match self {
            Definition::Var { name, .. } | Definition::Array { name, .. } | Definition::Table { name, .. } => name,
            Definition::Connected(r) => &r.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericDocument {
    pub version: Version,
    pub materials: Vec<Material>,
    pub solids: BTreeMap<String, SolidDef>,
    pub compositions: BTreeMap<String, Composition>,
    pub definitions: Vec<Definition>,
    pub world: Option<String>,
}

impl Default for GenericDocument {
    fn default() -> Self {
        GenericDocument {
            version: Version::V4,
            materials: Vec::new(),
            solids: BTreeMap::new(),
            compositions: BTreeMap::new(),
            definitions: Vec::new(),
            world: None,
        }
    }
}

impl GenericDocument {
    /// Parameter references still waiting for a value, in document order.
    pub fn unresolved_params(&self) -> Vec<&ParamRef> {
        self.definitions
            .iter()
            .filter_map(|d| match d {
                Definition::Connected(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    pub fn material(&self, name: &str) -> Option<&Material> {
        self.materials.iter().find(|m| m.name == name)
    }

    pub fn has_expressions(&self) -> bool {
        self.solids
            .values()
            .any(|s| s.shape.scalar_params().iter().any(|(_, p)| p.is_expr()) || zplane_exprs(&s.shape))
            || self
                .compositions
                .values()
                .any(|c| c.placements.iter().any(|p| p.params().iter().any(|q| q.is_expr())))
            || self.materials.iter().any(|m| m.density.is_expr())
    }

    /// Visit every attribute parameter (not definitions) with its owner's name.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for m in &mut self.materials {
            out.push((m.name.clone(), &mut m.density));
        }
        for s in self.solids.values_mut() {
            let owner = s.name.clone();
            for p in shape_params_mut(&mut s.shape) {
                out.push((owner.clone(), p));
            }
        }
        for c in self.compositions.values_mut() {
            for pl in &mut c.placements {
                let owner = format!("{}/{}", c.name, pl.volume());
                for p in pl.params_mut() {
                    out.push((owner.clone(), p));
                }
            }
        }
        out
    }

    pub fn to_xml(&self) -> String {
        write_document(self)
    }
}

fn zplane_exprs(s: &Shape<Param>) -> bool {
    s.zplanes()
        .iter()
        .any(|z| z.z.is_expr() || z.rmin.is_expr() || z.rmax.is_expr())
}

fn shape_params_mut(s: &mut Shape<Param>) -> Vec<&mut Param> {
    match s {
        Shape::Box { x, y, z } => vec![x, y, z],
        Shape::Tube {
            rmin,
            rmax,
            zhalf,
            phi0,
            dphi,
        } => vec![rmin, rmax, zhalf, phi0, dphi],
        Shape::Cone {
            rmin1,
            rmax1,
            rmin2,
            rmax2,
            zhalf,
            phi0,
            dphi,
        } => vec![rmin1, rmax1, rmin2, rmax2, zhalf, phi0, dphi],
        Shape::Trd {
            x1,
            x2,
            y1,
            y2,
            zhalf,
        } => vec![x1, x2, y1, y2, zhalf],
        Shape::Polycone {
            phi0,
            dphi,
            zplanes,
        } => {
            let mut v: Vec<&mut Param> = vec![phi0, dphi];
            for zp in zplanes.iter_mut() {
                v.push(&mut zp.z);
                v.push(&mut zp.rmin);
                v.push(&mut zp.rmax);
            }
            v
        }
        Shape::Sphere {
            rmin,
            rmax,
            theta0,
            dtheta,
            phi0,
            dphi,
        } => vec![rmin, rmax, theta0, dtheta, phi0, dphi],
        Shape::Helix {
            rho,
            pitch,
            turns,
            rtube,
        } => vec![rho, pitch, turns, rtube],
    }
}

fn numeric(p: &Param, context: &str) -> Result<f64, ModelError> {
    match p {
        Param::Num(v) => Ok(*v),
        Param::Expr(t) => Err(ModelError::NotNumeric {
            context: context.to_string(),
            text: t.clone(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "WARNING",
            Severity::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    DanglingRef(String),
    NameCollision(String),
    Cycle(Vec<String>),
    NoWorld,
    EmptyComposition(String),
    UnknownMaterial(String),
    InvalidSolid { name: String, reason: String },
    InvalidPlacement { owner: String, reason: String },
    InvalidMaterial(String),
    UnfilledParameter(String),
    Unexpanded(String),
    UnknownElement(String),
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticKind::DanglingRef(n) => write!(f, "reference to undefined volume `{n}`"),
            DiagnosticKind::NameCollision(n) => write!(f, "`{n}` names both a solid and a composition"),
            DiagnosticKind::Cycle(c) => write!(f, "composition cycle {}", c.join(" -> ")),
            DiagnosticKind::NoWorld => f.write_str("no world volume"),
            DiagnosticKind::EmptyComposition(n) => write!(f, "composition `{n}` places nothing"),
            DiagnosticKind::UnknownMaterial(n) => write!(f, "undefined material `{n}`"),
            DiagnosticKind::InvalidSolid { name, reason } => write!(f, "solid `{name}`: {reason}"),
            DiagnosticKind::InvalidPlacement { owner, reason } => write!(f, "placement in `{owner}`: {reason}"),
            DiagnosticKind::InvalidMaterial(n) => write!(f, "material `{n}` needs a positive density"),
            DiagnosticKind::UnfilledParameter(n) => write!(f, "parameter `{n}` has not been filled"),
            DiagnosticKind::Unexpanded(n) => write!(f, "`{n}` holds formulas; expand before building"),
            DiagnosticKind::UnknownElement(t) => write!(f, "unknown element <{t}> skipped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    /// Name of the element the diagnostic is about, used for line lookup.
    pub subject: Option<String>,
    pub line: Option<u32>,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, subject: Option<&str>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            kind,
            subject: subject.map(str::to_string),
            line: None,
        }
    }

    fn warning(kind: DiagnosticKind, subject: Option<&str>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(kind, subject)
        }
    }

    /// `SEVERITY file:line: message`
    pub fn render(&self, file: &str, lines: &HashMap<String, u32>) -> String {
        let line = self
            .line
            .or_else(|| self.subject.as_ref().and_then(|s| lines.get(s).copied()))
            .unwrap_or(0);
        format!("{} {}:{}: {}", self.severity, file, line, self.kind)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.severity, self.kind)
    }
}

/// Result of parsing: the document, non-fatal warnings, and the source line
/// of every named element.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub document: GenericDocument,
    pub warnings: Vec<Diagnostic>,
    pub lines: HashMap<String, u32>,
}

// ---------------------------------------------------------------------------
// Parsing

const CONTAINERS: &[&str] = &["materials", "defines", "volumes", "section"];

pub fn parse_document(xml: &str) -> Result<Parsed, ModelError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        ModelError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let mut p = Parser {
        xml: &doc,
        out: GenericDocument::default(),
        warnings: Vec::new(),
        lines: HashMap::new(),
        names: HashMap::new(),
    };
    let root = doc.root_element();
    p.children(root)?;
    let version = match root.attribute("version") {
        Some("v4") | Some("4") => Version::V4,
        Some("v6") | Some("6") => Version::V6,
        Some(other) => {
            return Err(ModelError::BadValue {
                attribute: "version".into(),
                value: other.into(),
                line: p.line(root),
            })
        }
        None if p.out.definitions.is_empty() && !p.out.has_expressions() => Version::V4,
        None => Version::V6,
    };
    p.out.version = version;
    p.out.world = root.attribute("world").map(str::to_string);
    Ok(Parsed {
        document: p.out,
        warnings: p.warnings,
        lines: p.lines,
    })
}

struct Parser<'a, 'input> {
    xml: &'a roxmltree::Document<'input>,
    out: GenericDocument,
    warnings: Vec<Diagnostic>,
    lines: HashMap<String, u32>,
    /// namespace of volume and material names seen so far
    names: HashMap<(u8, String), u32>,
}

type Node<'a, 'input> = roxmltree::Node<'a, 'input>;

impl<'a, 'input> Parser<'a, 'input> {
    fn line(&self, n: Node) -> u32 {
        self.xml.text_pos_at(n.range().start).row
    }

    fn claim(&mut self, space: u8, name: &str, n: Node) -> Result<(), ModelError> {
        let line = self.line(n);
        if self.names.insert((space, name.to_string()), line).is_some() {
            return Err(ModelError::Duplicate {
                name: name.to_string(),
                line,
            });
        }
        self.lines.insert(name.to_string(), line);
        Ok(())
    }

    fn children(&mut self, parent: Node<'a, 'input>) -> Result<(), ModelError> {
        for n in parent.children().filter(|n| n.is_element()) {
            self.element(n)?;
        }
        Ok(())
    }

    fn element(&mut self, n: Node<'a, 'input>) -> Result<(), ModelError> {
        let tag = n.tag_name().name();
        if CONTAINERS.contains(&tag) {
            return self.children(n);
        }
        match tag {
            "material" => {
                let name = self.req_str(n, "name")?;
                self.claim(0, &name, n)?;
                let color = match n.attribute("color") {
                    Some(c) => {
                        let v = self.vector(n, "color", c, 3)?;
                        let mut rgb = [0.0; 3];
                        for (slot, p) in rgb.iter_mut().zip(&v) {
                            *slot = p.as_num().filter(|x| (0.0..=1.0).contains(x)).ok_or_else(|| {
                                ModelError::BadValue {
                                    attribute: "color".into(),
                                    value: c.into(),
                                    line: self.line(n),
                                }
                            })?;
                        }
                        Some(rgb)
                    }
                    None => None,
                };
                let density = self.req(n, "density")?;
                self.out.materials.push(Material { name, density, color });
            }
            "var" => {
                let name = self.req_str(n, "name")?;
                self.claim(1, &name, n)?;
                let def = match n.attribute("connection") {
                    Some(conn) => Definition::Connected(ParamRef {
                        connection: conn.to_string(),
                        name,
                    }),
                    None => Definition::Var {
                        name,
                        value: self.req(n, "value")?,
                    },
                };
                self.out.definitions.push(def);
            }
            "array" => {
                let name = self.req_str(n, "name")?;
                self.claim(1, &name, n)?;
                let values = split_list(&self.req_str(n, "values")?);
                self.out.definitions.push(Definition::Array { name, values });
            }
            "table" => {
                let name = self.req_str(n, "name")?;
                self.claim(1, &name, n)?;
                let mut rows = Vec::new();
                for row in n.children().filter(|c| c.has_tag_name("row")) {
                    rows.push(split_list(&self.req_str(row, "values")?));
                }
                self.out.definitions.push(Definition::Table { name, rows });
            }
            "composition" => {
                let name = self.req_str(n, "name")?;
                self.claim(2, &name, n)?;
                let mut placements = Vec::new();
                for c in n.children().filter(|c| c.is_element()) {
                    match self.placement(c)? {
                        Some(p) => placements.push(p),
                        None => self.unknown(c),
                    }
                }
                let envelope = n.attribute("envelope").map(str::to_string);
                self.out.compositions.insert(
                    name.clone(),
                    Composition {
                        name,
                        envelope,
                        placements,
                    },
                );
            }
            _ => match self.shape(n)? {
                Some(shape) => {
                    let name = self.req_str(n, "name")?;
                    self.claim(2, &name, n)?;
                    let material = n.attribute("material").map(str::to_string);
                    self.out.solids.insert(
                        name.clone(),
                        SolidDef {
                            name,
                            shape,
                            material,
                        },
                    );
                }
                None => self.unknown(n),
            },
        }
        Ok(())
    }

    fn unknown(&mut self, n: Node) {
        let tag = n.tag_name().name().to_string();
        self.warnings.push(Diagnostic {
            severity: Severity::Warning,
            kind: DiagnosticKind::UnknownElement(tag),
            subject: n.attribute("name").map(str::to_string),
            line: Some(self.line(n)),
        });
    }

    fn shape(&mut self, n: Node) -> Result<Option<Shape<Param>>, ModelError> {
        let zero = || Param::Num(0.0);
        Ok(Some(match n.tag_name().name() {
            "box" => {
                let [x, y, z] = match n.attribute("XYZ") {
                    Some(v) => self.vec3(n, "XYZ", v)?,
                    None => [self.req(n, "x")?, self.req(n, "y")?, self.req(n, "z")?],
                };
                Shape::Box { x, y, z }
            }
            "tube" => Shape::Tube {
                rmin: self.opt(n, "rmin", zero()),
                rmax: self.req(n, "rmax")?,
                zhalf: self.req(n, "zhalf")?,
                phi0: self.opt(n, "phi0", zero()),
                dphi: self.opt(n, "dphi", Param::Num(360.0)),
            },
            "cone" => Shape::Cone {
                rmin1: self.opt(n, "rmin1", zero()),
                rmax1: self.req(n, "rmax1")?,
                rmin2: self.opt(n, "rmin2", zero()),
                rmax2: self.req(n, "rmax2")?,
                zhalf: self.req(n, "zhalf")?,
                phi0: self.opt(n, "phi0", zero()),
                dphi: self.opt(n, "dphi", Param::Num(360.0)),
            },
            "trd" => Shape::Trd {
                x1: self.req(n, "x1")?,
                x2: self.req(n, "x2")?,
                y1: self.req(n, "y1")?,
                y2: self.req(n, "y2")?,
                zhalf: self.req(n, "zhalf")?,
            },
            "polycone" => {
                let mut zplanes = Vec::new();
                for zp in n.children().filter(|c| c.has_tag_name("zplane")) {
                    zplanes.push(ZPlane {
                        z: self.req(zp, "z")?,
                        rmin: self.opt(zp, "rmin", zero()),
                        rmax: self.req(zp, "rmax")?,
                    });
                }
                Shape::Polycone {
                    phi0: self.opt(n, "phi0", zero()),
                    dphi: self.opt(n, "dphi", Param::Num(360.0)),
                    zplanes,
                }
            }
            "sphere" => Shape::Sphere {
                rmin: self.opt(n, "rmin", zero()),
                rmax: self.req(n, "rmax")?,
                theta0: self.opt(n, "theta0", zero()),
                dtheta: self.opt(n, "dtheta", Param::Num(180.0)),
                phi0: self.opt(n, "phi0", zero()),
                dphi: self.opt(n, "dphi", Param::Num(360.0)),
            },
            "helix" => Shape::Helix {
                rho: self.req(n, "rho")?,
                pitch: self.req(n, "pitch")?,
                turns: self.req(n, "turns")?,
                rtube: self.req(n, "rtube")?,
            },
            _ => return Ok(None),
        }))
    }

    fn placement(&mut self, n: Node) -> Result<Option<Placement>, ModelError> {
        let zero = || Param::Num(0.0);
        Ok(Some(match n.tag_name().name() {
            "posXYZ" => {
                let translation = match n.attribute("XYZ") {
                    Some(v) => self.vec3(n, "XYZ", v)?,
                    None => [
                        self.opt(n, "x", zero()),
                        self.opt(n, "y", zero()),
                        self.opt(n, "z", zero()),
                    ],
                };
                let rotation = match n.attribute("rot") {
                    Some(v) => self.vec3(n, "rot", v)?,
                    None => [
                        self.opt(n, "rx", zero()),
                        self.opt(n, "ry", zero()),
                        self.opt(n, "rz", zero()),
                    ],
                };
                Placement::Single {
                    volume: self.req_str(n, "volume")?,
                    translation,
                    rotation,
                }
            }
            "mposPhi" => Placement::MultiPhi {
                volume: self.req_str(n, "volume")?,
                ncopy: self.req(n, "ncopy")?,
                phi0: self.opt(n, "phi0", zero()),
                dphi: self.req(n, "dphi")?,
                radius: self.req(n, "R")?,
            },
            "mposZ" => Placement::MultiZ {
                volume: self.req_str(n, "volume")?,
                ncopy: self.req(n, "ncopy")?,
                z0: self.req(n, "z0")?,
                dz: self.req(n, "dz")?,
            },
            _ => return Ok(None),
        }))
    }

    fn req_str(&self, n: Node, attr: &'static str) -> Result<String, ModelError> {
        n.attribute(attr)
            .map(str::to_string)
            .ok_or_else(|| ModelError::MissingAttribute {
                element: n.tag_name().name().to_string(),
                attribute: attr,
                line: self.line(n),
            })
    }

    fn req(&self, n: Node, attr: &'static str) -> Result<Param, ModelError> {
        let s = self.req_str(n, attr)?;
        if s.trim().is_empty() {
            return Err(ModelError::BadValue {
                attribute: attr.into(),
                value: s,
                line: self.line(n),
            });
        }
        Ok(Param::parse(&s))
    }

    fn opt(&self, n: Node, attr: &str, default: Param) -> Param {
        n.attribute(attr).map(Param::parse).unwrap_or(default)
    }

    fn vector(&self, n: Node, attr: &str, value: &str, expected: usize) -> Result<Vec<Param>, ModelError> {
        let v = split_list(value);
        if v.len() != expected {
            return Err(ModelError::BadVector {
                attribute: attr.into(),
                expected,
                value: value.into(),
                line: self.line(n),
            });
        }
        Ok(v)
    }

    fn vec3(&self, n: Node, attr: &str, value: &str) -> Result<[Param; 3], ModelError> {
        let v = self.vector(n, attr, value, 3)?;
        Ok(v.try_into().expect("three components"))
    }
}

fn split_list(s: &str) -> Vec<Param> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(';').map(Param::parse).collect()
}

// ---------------------------------------------------------------------------
// Serialisation

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn join(ps: &[Param]) -> String {
    ps.iter().map(|p| esc(&p.to_string())).collect::<Vec<_>>().join(";")
}

fn write_document(doc: &GenericDocument) -> String {
    use std::fmt::Write;
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write!(s, "<AGDD version=\"{}\"", doc.version).unwrap();
    if let Some(w) = &doc.world {
        write!(s, " world=\"{}\"", esc(w)).unwrap();
    }
    s.push_str(">\n");
    if !doc.materials.is_empty() {
        s.push_str("  <materials>\n");
        for m in &doc.materials {
            write!(s, "    <material name=\"{}\" density=\"{}\"", esc(&m.name), esc(&m.density.to_string())).unwrap();
            if let Some(c) = m.color {
                write!(s, " color=\"{};{};{}\"", c[0], c[1], c[2]).unwrap();
            }
            s.push_str("/>\n");
        }
        s.push_str("  </materials>\n");
    }
    if !doc.definitions.is_empty() {
        s.push_str("  <defines>\n");
        for d in &doc.definitions {
            match d {
                Definition::Var { name, value } => {
                    writeln!(s, "    <var name=\"{}\" value=\"{}\"/>", esc(name), esc(&value.to_string())).unwrap()
                }
                Definition::Connected(r) => writeln!(
                    s,
                    "    <var connection=\"{}\" name=\"{}\"/>",
                    esc(&r.connection),
                    esc(&r.name)
                )
                .unwrap(),
                Definition::Array { name, values } => {
                    writeln!(s, "    <array name=\"{}\" values=\"{}\"/>", esc(name), join(values)).unwrap()
                }
                Definition::Table { name, rows } => {
                    writeln!(s, "    <table name=\"{}\">", esc(name)).unwrap();
                    for r in rows {
                        writeln!(s, "      <row values=\"{}\"/>", join(r)).unwrap();
                    }
                    s.push_str("    </table>\n");
                }
            }
        }
        s.push_str("  </defines>\n");
    }
    if !doc.solids.is_empty() || !doc.compositions.is_empty() {
        s.push_str("  <volumes>\n");
        for sd in doc.solids.values() {
            write!(s, "    <{} name=\"{}\"", sd.shape.kind(), esc(&sd.name)).unwrap();
            for (k, v) in sd.shape.scalar_params() {
                write!(s, " {}=\"{}\"", k, esc(&v.to_string())).unwrap();
            }
            if let Some(m) = &sd.material {
                write!(s, " material=\"{}\"", esc(m)).unwrap();
            }
            let planes = sd.shape.zplanes();
            if planes.is_empty() {
                s.push_str("/>\n");
            } else {
                s.push_str(">\n");
                for zp in planes {
                    writeln!(
                        s,
                        "      <zplane z=\"{}\" rmin=\"{}\" rmax=\"{}\"/>",
                        esc(&zp.z.to_string()),
                        esc(&zp.rmin.to_string()),
                        esc(&zp.rmax.to_string())
                    )
                    .unwrap();
                }
                writeln!(s, "    </{}>", sd.shape.kind()).unwrap();
            }
        }
        for c in doc.compositions.values() {
            write!(s, "    <composition name=\"{}\"", esc(&c.name)).unwrap();
            if let Some(e) = &c.envelope {
                write!(s, " envelope=\"{}\"", esc(e)).unwrap();
            }
            s.push_str(">\n");
            for p in &c.placements {
                match p {
                    Placement::Single {
                        volume,
                        translation,
                        rotation,
                    } => writeln!(
                        s,
                        "      <posXYZ volume=\"{}\" XYZ=\"{}\" rot=\"{}\"/>",
                        esc(volume),
                        join(translation),
                        join(rotation)
                    )
                    .unwrap(),
                    Placement::MultiPhi {
                        volume,
                        ncopy,
                        phi0,
                        dphi,
                        radius,
                    } => writeln!(
                        s,
                        "      <mposPhi volume=\"{}\" ncopy=\"{}\" phi0=\"{}\" dphi=\"{}\" R=\"{}\"/>",
                        esc(volume),
                        esc(&ncopy.to_string()),
                        esc(&phi0.to_string()),
                        esc(&dphi.to_string()),
                        esc(&radius.to_string())
                    )
                    .unwrap(),
                    Placement::MultiZ { volume, ncopy, z0, dz } => writeln!(
                        s,
                        "      <mposZ volume=\"{}\" ncopy=\"{}\" z0=\"{}\" dz=\"{}\"/>",
                        esc(volume),
                        esc(&ncopy.to_string()),
                        esc(&z0.to_string()),
                        esc(&dz.to_string())
                    )
                    .unwrap(),
                }
            }
            s.push_str("    </composition>\n");
        }
        s.push_str("  </volumes>\n");
    }
    s.push_str("</AGDD>\n");
    s
}

// ---------------------------------------------------------------------------
// Validation

/// Report dangling references, name collisions, composition cycles and
/// anything else that would stop the document from building. The result is
/// empty iff the document can be built as is.
pub fn validate(doc: &GenericDocument) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for name in doc.solids.keys() {
        if doc.compositions.contains_key(name) {
            out.push(Diagnostic::error(DiagnosticKind::NameCollision(name.clone()), Some(name)));
        }
    }
    let is_volume = |n: &str| doc.solids.contains_key(n) || doc.compositions.contains_key(n);
    match &doc.world {
        None => out.push(Diagnostic::warning(DiagnosticKind::NoWorld, None)),
        Some(w) if !is_volume(w) => {
            out.push(Diagnostic::error(DiagnosticKind::DanglingRef(w.clone()), None))
        }
        Some(_) => {}
    }
    for m in &doc.materials {
        match m.density {
            Param::Num(d) if d <= 0.0 => {
                out.push(Diagnostic::error(DiagnosticKind::InvalidMaterial(m.name.clone()), Some(&m.name)))
            }
            _ => {}
        }
    }
    for s in doc.solids.values() {
        if let Some(m) = &s.material {
            if doc.material(m).is_none() {
                out.push(Diagnostic::error(DiagnosticKind::UnknownMaterial(m.clone()), Some(&s.name)));
            }
        }
        if let Ok(solid) = s.numeric_shape() {
            if let Err(e) = solid.validate() {
                out.push(Diagnostic::error(
                    DiagnosticKind::InvalidSolid {
                        name: s.name.clone(),
                        reason: e.to_string(),
                    },
                    Some(&s.name),
                ));
            }
        }
    }
    for c in doc.compositions.values() {
        if c.placements.is_empty() {
            out.push(Diagnostic::error(DiagnosticKind::EmptyComposition(c.name.clone()), Some(&c.name)));
        }
        if let Some(e) = &c.envelope {
            if !doc.solids.contains_key(e) {
                out.push(Diagnostic::error(DiagnosticKind::DanglingRef(e.clone()), Some(&c.name)));
            }
        }
        for p in &c.placements {
            if !is_volume(p.volume()) {
                out.push(Diagnostic::error(
                    DiagnosticKind::DanglingRef(p.volume().to_string()),
                    Some(&c.name),
                ));
            }
            let ncopy = match p {
                Placement::MultiPhi { ncopy, .. } | Placement::MultiZ { ncopy, .. } => ncopy.as_num(),
                Placement::Single { .. } => None,
            };
            if let Some(n) = ncopy {
                if copy_count(n).is_none() {
                    out.push(Diagnostic::error(
                        DiagnosticKind::InvalidPlacement {
                            owner: c.name.clone(),
                            reason: format!("copy count {n} must be an integer >= 1"),
                        },
                        Some(&c.name),
                    ));
                }
            }
        }
    }
    for cycle in find_cycles(doc) {
        let subject = cycle[0].clone();
        out.push(Diagnostic::error(DiagnosticKind::Cycle(cycle), Some(&subject)));
    }
    for r in doc.unresolved_params() {
        out.push(Diagnostic::warning(DiagnosticKind::UnfilledParameter(r.name.clone()), Some(&r.name)));
    }
    let severity = if doc.version == Version::V4 {
        Severity::Error
    } else {
        Severity::Warning
    };
    let mut unexpanded = BTreeSet::new();
    for s in doc.solids.values() {
        if s.shape.scalar_params().iter().any(|(_, p)| p.is_expr()) || zplane_exprs(&s.shape) {
            unexpanded.insert(s.name.clone());
        }
    }
    for c in doc.compositions.values() {
        if c.placements.iter().any(|p| p.params().iter().any(|q| q.is_expr())) {
            unexpanded.insert(c.name.clone());
        }
    }
    for m in &doc.materials {
        if m.density.is_expr() {
            unexpanded.insert(m.name.clone());
        }
    }
    for name in unexpanded {
        out.push(Diagnostic {
            severity,
            kind: DiagnosticKind::Unexpanded(name.clone()),
            subject: Some(name),
            line: None,
        });
    }
    out
}

fn find_cycles(doc: &GenericDocument) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    fn visit(
        doc: &GenericDocument,
        name: &str,
        marks: &mut HashMap<String, Mark>,
        stack: &mut Vec<String>,
        found: &mut BTreeSet<Vec<String>>,
    ) {
        marks.insert(name.to_string(), Mark::Active);
        stack.push(name.to_string());
        let children: BTreeSet<&str> = doc.compositions[name].placements.iter().map(|p| p.volume()).collect();
        for child in children {
            if !doc.compositions.contains_key(child) {
                continue;
            }
            match marks.get(child).copied().unwrap_or(Mark::Fresh) {
                Mark::Active => {
                    let start = stack.iter().position(|s| s == child).expect("on stack");
                    let mut cycle = stack[start..].to_vec();
                    let min = cycle.iter().enumerate().min_by_key(|(_, s)| *s).map(|(i, _)| i).unwrap_or(0);
                    cycle.rotate_left(min);
                    found.insert(cycle);
                }
                Mark::Fresh => visit(doc, child, marks, stack, found),
                Mark::Done => {}
            }
        }
        stack.pop();
        marks.insert(name.to_string(), Mark::Done);
    }
    let mut marks = HashMap::new();
    let mut found = BTreeSet::new();
    for name in doc.compositions.keys() {
        if marks.get(name).copied().unwrap_or(Mark::Fresh) == Mark::Fresh {
            visit(doc, name, &mut marks, &mut Vec::new(), &mut found);
        }
    }
    found.into_iter().collect()
}

fn copy_count(n: f64) -> Option<usize> {
    (n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64).then_some(n as usize)
}

// ---------------------------------------------------------------------------
// Placement expansion

/// Replace every multiple placement by its explicit single placements.
/// Copy `i` of a phi placement sits at angle `phi0 + i*dphi`, radius `R`,
/// rotated by the same angle about z; copy `i` of a z placement at
/// `z0 + i*dz`.
pub fn expand_placements(doc: &GenericDocument) -> Result<GenericDocument, ModelError> {
    let mut out = doc.clone();
    for c in out.compositions.values_mut() {
        let mut expanded = Vec::with_capacity(c.placements.len());
        for p in &c.placements {
            match p {
                Placement::Single { .. } => expanded.push(p.clone()),
                Placement::MultiPhi {
                    volume,
                    ncopy,
                    phi0,
                    dphi,
                    radius,
                } => {
                    let n = count(volume, ncopy)?;
                    let phi0 = numeric(phi0, volume)?;
                    let dphi = numeric(dphi, volume)?;
                    let r = numeric(radius, volume)?;
                    for i in 0..n {
                        let a = phi0 + i as f64 * dphi;
                        expanded.push(Placement::single(volume, [r * cos_deg(a), r * sin_deg(a), 0.0], [0.0, 0.0, a]));
                    }
                }
                Placement::MultiZ { volume, ncopy, z0, dz } => {
                    let n = count(volume, ncopy)?;
                    let z0 = numeric(z0, volume)?;
                    let dz = numeric(dz, volume)?;
                    for i in 0..n {
                        expanded.push(Placement::single(volume, [0.0, 0.0, z0 + i as f64 * dz], [0.0; 3]));
                    }
                }
            }
        }
        c.placements = expanded;
    }
    Ok(out)
}

fn count(volume: &str, ncopy: &Param) -> Result<usize, ModelError> {
    let n = numeric(ncopy, volume)?;
    copy_count(n).ok_or(ModelError::BadCopyCount {
        volume: volume.to_string(),
        value: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(xml: &str) -> GenericDocument {
        parse_document(xml).unwrap().document
    }

    #[test]
    fn box_split_attributes() {
        let d = parse(r#"<AGDD><box x="1.1" y="2.2" z="3.3" name="b"/></AGDD>"#);
        let s = &d.solids["b"];
        assert_eq!(
            s.shape,
            Shape::Box {
                x: Param::Num(1.1),
                y: Param::Num(2.2),
                z: Param::Num(3.3)
            }
        );
        assert_eq!(d.version, Version::V4);
    }

    #[test]
    fn box_vector_attribute_keeps_formulas() {
        let d = parse(r#"<AGDD version="v6"><box XYZ="5.5;a[5];t[2,3]" name="abox"/></AGDD>"#);
        assert_eq!(
            d.solids["abox"].shape,
            Shape::Box {
                x: Param::Num(5.5),
                y: Param::Expr("a[5]".into()),
                z: Param::Expr("t[2,3]".into())
            }
        );
    }

    #[test]
    fn empty_document_warns_no_world() {
        let p = parse_document("<AGDD/>").unwrap();
        let d = &p.document;
        assert!(d.solids.is_empty() && d.compositions.is_empty() && d.materials.is_empty());
        assert!(d.definitions.is_empty() && d.world.is_none());
        let diags = validate(d);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::NoWorld);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert!(diags[0].render("x.xml", &p.lines).contains("no world volume"));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let e = parse_document("<AGDD>\n  <box name=\"b\" x=\"1\"\n</AGDD>").unwrap_err();
        match e {
            ModelError::Xml { line, .. } => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let e = parse_document(r#"<AGDD><box name="b" x="1" y="1" z="1"/><tube name="b" rmax="1" zhalf="1"/></AGDD>"#)
            .unwrap_err();
        assert!(matches!(e, ModelError::Duplicate { ref name, line: 1 } if name == "b"));
    }

    #[test]
    fn unknown_elements_warn_and_skip() {
        let p = parse_document(r#"<AGDD><torus name="t" r="1"/><box name="b" x="1" y="1" z="1"/></AGDD>"#).unwrap();
        assert_eq!(p.document.solids.len(), 1);
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.warnings[0].kind, DiagnosticKind::UnknownElement("torus".into()));
    }

    #[test]
    fn dangling_reference() {
        let d = parse(
            r#"<AGDD world="w"><composition name="w"><posXYZ volume="sct_barrel"/></composition></AGDD>"#,
        );
        let diags = validate(&d);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::DanglingRef("sct_barrel".into()));
    }

    #[test]
    fn composition_cycle() {
        let d = parse(
            r#"<AGDD world="A">
                <composition name="A"><posXYZ volume="B"/></composition>
                <composition name="B"><posXYZ volume="A"/></composition>
            </AGDD>"#,
        );
        let diags = validate(&d);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::Cycle(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn consistent_two_level_document_is_clean() {
        let d = parse(
            r#"<AGDD world="world">
                <material name="Fe" density="7.87"/>
                <box name="plate" x="10" y="10" z="1" material="Fe"/>
                <composition name="stack"><mposZ volume="plate" ncopy="3" z0="-5" dz="5"/></composition>
                <composition name="world"><posXYZ volume="stack" XYZ="0;0;10"/></composition>
            </AGDD>"#,
        );
        assert!(validate(&d).is_empty(), "{:?}", validate(&d));
    }

    #[test]
    fn phi_expansion() {
        let d = parse(
            r#"<AGDD world="w"><box name="b" x="1" y="1" z="1"/>
               <composition name="w"><mposPhi volume="b" ncopy="4" phi0="0" dphi="90" R="100"/></composition></AGDD>"#,
        );
        let e = expand_placements(&d).unwrap();
        let expected = [
            ([100.0, 0.0, 0.0], 0.0),
            ([0.0, 100.0, 0.0], 90.0),
            ([-100.0, 0.0, 0.0], 180.0),
            ([0.0, -100.0, 0.0], 270.0),
        ];
        let pl = &e.compositions["w"].placements;
        assert_eq!(pl.len(), 4);
        for (p, (t, a)) in pl.iter().zip(expected) {
            assert_eq!(*p, Placement::single("b", t, [0.0, 0.0, a]));
        }
        assert_eq!(expand_placements(&e).unwrap(), e);
    }

    #[test]
    fn z_expansion_and_identity() {
        let d = parse(
            r#"<AGDD world="w"><box name="b" x="1" y="1" z="1"/>
               <composition name="w"><mposZ volume="b" ncopy="2" z0="-50" dz="100"/></composition></AGDD>"#,
        );
        let e = expand_placements(&d).unwrap();
        let pl = &e.compositions["w"].placements;
        assert_eq!(pl[0], Placement::single("b", [0.0, 0.0, -50.0], [0.0; 3]));
        assert_eq!(pl[1], Placement::single("b", [0.0, 0.0, 50.0], [0.0; 3]));
        let singles = parse(
            r#"<AGDD world="w"><box name="b" x="1" y="1" z="1"/>
               <composition name="w"><posXYZ volume="b" XYZ="1;2;3" rot="0;0;45"/></composition></AGDD>"#,
        );
        assert_eq!(expand_placements(&singles).unwrap(), singles);
    }

    #[test]
    fn zero_copies_rejected() {
        let d = parse(
            r#"<AGDD world="w"><box name="b" x="1" y="1" z="1"/>
               <composition name="w"><mposZ volume="b" ncopy="0" z0="0" dz="1"/></composition></AGDD>"#,
        );
        assert!(matches!(expand_placements(&d), Err(ModelError::BadCopyCount { .. })));
        assert!(validate(&d)
            .iter()
            .any(|d| matches!(d.kind, DiagnosticKind::InvalidPlacement { .. })));
    }

    #[test]
    fn serialise_round_trip() {
        let src = r#"<AGDD version="v6" world="w">
            <material name="Fe" density="7.87" color="0.5;0.25;1"/>
            <var name="a0" value="1"/>
            <var connection="demo" name="SCT.length"/>
            <array name="a" values="1;2;3"/>
            <table name="t"><row values="1;2"/><row values="3;4"/></table>
            <box name="b" XYZ="5.5;a[2];t[2,1]" material="Fe"/>
            <polycone name="pc" dphi="90"><zplane z="-1" rmax="2"/><zplane z="1" rmin="0.5" rmax="a0*3"/></polycone>
            <helix name="h" rho="10" pitch="5" turns="1.5" rtube="1"/>
            <composition name="w" envelope="b">
              <posXYZ volume="pc" XYZ="1;2;3" rot="0;90;0"/>
              <mposPhi volume="h" ncopy="3" dphi="120" R="a0*50"/>
              <mposZ volume="pc" ncopy="2" z0="-3" dz="6"/>
            </composition>
        </AGDD>"#;
        let d = parse(src);
        let again = parse(&d.to_xml());
        assert_eq!(d, again);
    }
}
