//! Scene graphs built from documents under build options.
//!
//! Optimization levels:
//! - 0: every placement owns its geometry;
//! - 1: geometries shared by structural key (kind, parameters rounded to
//!   1e-9 mm, quality);
//! - 2: repeated composition subtrees additionally shared as shared groups;
//! - 3: everything flattened into per-material merged meshes, identities
//!   discarded.
//!
//! Interactivity is capped by optimization: 2, 2, 1, 0 for levels 0 to 3.

mod bvh;
mod compiled;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{placement_matrix, Aabb, Matrix, Point};
use crate::model::{self, Diagnostic, GenericDocument, ModelError, Placement, Severity};
use crate::solids::{tessellate, Mesh, Quality, Solid, SolidError};

pub use bvh::Bvh;
pub use compiled::{compile, AppearanceDelta, CompiledScene, Instance, MutationError, SceneStats};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid build options: {0}")]
    Options(String),
    #[error("document is not fully numeric: {0}")]
    NotNumeric(#[from] ModelError),
    #[error("document has {} error(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("document has no world volume")]
    NoWorld,
    #[error("solid `{name}`: {source}")]
    Solid {
        name: String,
        #[source]
        source: SolidError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    #[default]
    Default,
    Atlantis,
}

impl Palette {
    pub fn colors(self) -> [[f64; 3]; 8] {
        match self {
            Palette::Default => [
                [0.8, 0.1, 0.1],
                [0.1, 0.7, 0.1],
                [0.15, 0.3, 0.9],
                [0.9, 0.8, 0.1],
                [0.8, 0.2, 0.8],
                [0.1, 0.8, 0.8],
                [0.95, 0.55, 0.1],
                [0.6, 0.6, 0.6],
            ],
            Palette::Atlantis => [
                [1.0, 0.4, 0.0],
                [0.0, 0.6, 1.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.5],
                [1.0, 0.0, 0.5],
                [0.6, 0.2, 1.0],
                [1.0, 0.75, 0.8],
                [0.5, 1.0, 0.0],
            ],
        }
    }

    /// Stable color for a name.
    pub fn color_for(self, name: &str) -> [f64; 3] {
        // FNV-1a, so colors do not depend on the std hasher
        let h = name.bytes().fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
        self.colors()[(h % 8) as usize]
    }
}

impl std::str::FromStr for Palette {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DEFAULT" => Ok(Palette::Default),
            "ATLANTIS" => Ok(Palette::Atlantis),
            _ => Err(format!("unknown palette `{s}` (DEFAULT or ATLANTIS)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "style")]
pub enum HitStyle {
    Point,
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "style")]
pub enum TrackStyle {
    Polyline,
    Tube { radius: f64 },
}

/// How generic objects without a solid of their own are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representations {
    pub hit: HitStyle,
    pub track: TrackStyle,
}

impl Default for Representations {
    fn default() -> Self {
        Representations {
            hit: HitStyle::Point,
            track: TrackStyle::Polyline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub graphical: bool,
    pub optimization: u8,
    pub quality: Quality,
    pub interactivity: u8,
    pub representations: Representations,
    pub palette: Palette,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            graphical: true,
            optimization: 1,
            quality: Quality::default(),
            interactivity: 1,
            representations: Representations::default(),
            palette: Palette::Default,
        }
    }
}

impl BuildOptions {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.optimization > 3 {
            return Err(BuildError::Options(format!("optimization {} outside 0..=3", self.optimization)));
        }
        if self.interactivity > 2 {
            return Err(BuildError::Options(format!("interactivity {} outside 0..=2", self.interactivity)));
        }
        if let HitStyle::Sphere { radius } = self.representations.hit {
            if !(radius > 0.0) {
                return Err(BuildError::Options("hit sphere radius must be positive".into()));
            }
        }
        if let TrackStyle::Tube { radius } = self.representations.track {
            if !(radius > 0.0) {
                return Err(BuildError::Options("track tube radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Highest interactivity an optimization level allows.
    pub fn interactivity_cap(optimization: u8) -> u8 {
        [2, 2, 1, 0][optimization.min(3) as usize]
    }

    pub fn effective_interactivity(&self) -> u8 {
        self.interactivity.min(Self::interactivity_cap(self.optimization))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GeomId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SharedId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Mesh(Mesh),
    /// Independent polylines, drawn as line strips.
    Lines(Vec<Vec<Point>>),
    Points(Vec<Point>),
}

impl Geometry {
    pub fn kind(&self) -> &'static str {
        match self {
            Geometry::Mesh(_) => "mesh",
            Geometry::Lines(_) => "lines",
            Geometry::Points(_) => "points",
        }
    }

    pub fn triangle_count(&self) -> usize {
        match self {
            Geometry::Mesh(m) => m.triangles.len(),
            _ => 0,
        }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            Geometry::Mesh(m) => m.vertices.len(),
            Geometry::Lines(l) => l.iter().map(Vec::len).sum(),
            Geometry::Points(p) => p.len(),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Geometry::Mesh(m) => m.bounds(),
            Geometry::Lines(l) => Aabb::from_points(l.iter().flatten()),
            Geometry::Points(p) => Aabb::from_points(p.iter()),
        }
    }

    pub fn transformed(&self, m: &Matrix) -> Geometry {
        match self {
            Geometry::Mesh(mesh) => Geometry::Mesh(mesh.transformed(m)),
            Geometry::Lines(l) => Geometry::Lines(
                l.iter()
                    .map(|s| s.iter().map(|p| m.transform_point(p)).collect())
                    .collect(),
            ),
            Geometry::Points(p) => Geometry::Points(p.iter().map(|p| m.transform_point(p)).collect()),
        }
    }

    fn append(&mut self, other: &Geometry) {
        match (self, other) {
            (Geometry::Mesh(a), Geometry::Mesh(b)) => a.append(b),
            (Geometry::Lines(a), Geometry::Lines(b)) => a.extend(b.iter().cloned()),
            (Geometry::Points(a), Geometry::Points(b)) => a.extend_from_slice(b),
            _ => unreachable!("batches are keyed by geometry kind"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawMode {
    Solid,
    Wireframe,
    Vertexframe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    /// RGBA in [0, 1].
    pub color: [f64; 4],
    pub transparency: f64,
    pub mode: DrawMode,
    pub visible: bool,
}

impl Appearance {
    pub fn with_color(rgb: [f64; 3]) -> Appearance {
        Appearance {
            color: [rgb[0], rgb[1], rgb[2], 1.0],
            transparency: 0.0,
            mode: DrawMode::Solid,
            visible: true,
        }
    }
}

/// What a shape stands for, reported by introspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum VolumeInfo {
    Solid {
        name: String,
        solid: Solid,
        material: Option<String>,
    },
    Hit {
        collection: String,
        id: i64,
        energy: f64,
        kine: i64,
    },
    Track {
        id: i64,
        pt: f64,
        phi0: f64,
        eta: f64,
        d0: f64,
        z0: f64,
        charge: i32,
        pdg: i64,
    },
    /// Merged geometry of an optimization-3 scene.
    Batch { material: String, members: usize },
}

impl VolumeInfo {
    pub fn solid(&self) -> Option<&Solid> {
        match self {
            VolumeInfo::Solid { solid, .. } => Some(solid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeNode {
    pub name: String,
    pub geometry: GeomId,
    pub appearance: Option<AppId>,
    pub volume: usize,
    pub pickable: bool,
    /// Batching key at optimization 3 (the material name for solids).
    pub material: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Group { name: String, children: Vec<NodeId> },
    Transform { label: String, matrix: Matrix, child: NodeId },
    SharedRef(SharedId),
    Shape(ShapeNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedGroup {
    pub name: String,
    pub root: NodeId,
}

/// A built, not yet compiled, scene graph. Paths are the labels of the
/// transform nodes from the root down to a shape.
#[derive(Debug, Clone)]
pub struct SceneGraph {
    pub nodes: Vec<Node>,
    pub root: NodeId,
    pub geometries: Vec<Geometry>,
    pub appearances: Vec<Appearance>,
    pub shared: Vec<SharedGroup>,
    pub volumes: Vec<VolumeInfo>,
    pub options: BuildOptions,
}

impl SceneGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }
}

/// How a new shape should be colored.
#[derive(Debug, Clone)]
pub struct AppearanceSpec {
    /// Shapes with equal keys share a cell at interactivity 0.
    pub key: String,
    pub color: [f64; 3],
}

/// Incremental scene construction. Several documents and events can be
/// added; each becomes a child of the single root group.
pub struct SceneBuilder {
    opts: BuildOptions,
    nodes: Vec<Node>,
    geometries: Vec<Geometry>,
    appearances: Vec<Appearance>,
    shared: Vec<SharedGroup>,
    volumes: Vec<VolumeInfo>,
    roots: Vec<NodeId>,
    geom_cache: HashMap<String, GeomId>,
    mesh_cache: HashMap<String, Mesh>,
    app_cache: HashMap<String, AppId>,
}

impl SceneBuilder {
    pub fn new(opts: BuildOptions) -> Result<SceneBuilder, BuildError> {
        opts.validate()?;
        Ok(SceneBuilder {
            opts,
            nodes: Vec::new(),
            geometries: Vec::new(),
            appearances: Vec::new(),
            shared: Vec::new(),
            volumes: Vec::new(),
            roots: Vec::new(),
            geom_cache: HashMap::new(),
            mesh_cache: HashMap::new(),
            app_cache: HashMap::new(),
        })
    }

    pub fn options(&self) -> &BuildOptions {
        &self.opts
    }

    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        NodeId(self.nodes.len() as u32 - 1)
    }

    pub fn group(&mut self, name: &str, children: Vec<NodeId>) -> NodeId {
        self.push(Node::Group {
            name: name.to_string(),
            children,
        })
    }

    pub fn transform(&mut self, label: &str, matrix: Matrix, child: NodeId) -> NodeId {
        self.push(Node::Transform {
            label: label.to_string(),
            matrix,
            child,
        })
    }

    /// Register a geometry. With a key and optimization >= 1, equal keys
    /// share one table entry.
    pub fn geometry(&mut self, key: Option<&str>, make: impl FnOnce() -> Geometry) -> GeomId {
        let dedup = self.opts.optimization >= 1;
        if let (true, Some(k)) = (dedup, key) {
            if let Some(&id) = self.geom_cache.get(k) {
                return id;
            }
        }
        self.geometries.push(make());
        let id = GeomId(self.geometries.len() as u32 - 1);
        if let (true, Some(k)) = (dedup, key) {
            self.geom_cache.insert(k.to_string(), id);
        }
        id
    }

    fn appearance(&mut self, spec: &AppearanceSpec) -> Option<AppId> {
        if !self.opts.graphical {
            return None;
        }
        let shared = self.opts.effective_interactivity() == 0;
        if shared {
            if let Some(&id) = self.app_cache.get(&spec.key) {
                return Some(id);
            }
        }
        self.appearances.push(Appearance::with_color(spec.color));
        let id = AppId(self.appearances.len() as u32 - 1);
        if shared {
            self.app_cache.insert(spec.key.clone(), id);
        }
        Some(id)
    }

    pub fn shape(
        &mut self,
        name: &str,
        geometry: GeomId,
        appearance: &AppearanceSpec,
        volume: VolumeInfo,
        pickable: bool,
    ) -> NodeId {
        let appearance = self.appearance(appearance);
        self.volumes.push(volume);
        let node = ShapeNode {
            name: name.to_string(),
            geometry,
            appearance,
            volume: self.volumes.len() - 1,
            pickable,
            material: batch_key(&self.volumes[self.volumes.len() - 1]),
        };
        self.push(Node::Shape(node))
    }

    /// Tessellate a solid, reusing earlier tessellations of equal shapes.
    pub fn solid_geometry(&mut self, name: &str, solid: &Solid) -> Result<GeomId, BuildError> {
        let key = solid_key(solid, self.opts.quality);
        let mesh = match self.mesh_cache.get(&key) {
            Some(m) => m.clone(),
            None => {
                let m = tessellate(solid, self.opts.quality).map_err(|source| BuildError::Solid {
                    name: name.to_string(),
                    source,
                })?;
                self.mesh_cache.insert(key.clone(), m.clone());
                m
            }
        };
        Ok(self.geometry(Some(&key), || Geometry::Mesh(mesh)))
    }

    pub fn add_root(&mut self, node: NodeId) {
        self.roots.push(node);
    }

    /// Add a detector document under a transform labelled with its world
    /// volume name. The document must be fully numeric.
    pub fn add_document(&mut self, doc: &GenericDocument) -> Result<NodeId, BuildError> {
        if let Some(r) = doc.unresolved_params().first() {
            return Err(BuildError::NotNumeric(ModelError::NotNumeric {
                context: "parameter".into(),
                text: r.name.clone(),
            }));
        }
        let errors: Vec<Diagnostic> = model::validate(doc)
            .into_iter()
            .filter(|d| d.severity == Severity::Error || matches!(d.kind, model::DiagnosticKind::Unexpanded(_)))
            .collect();
        if !errors.is_empty() {
            return Err(BuildError::Invalid(errors));
        }
        let world = doc.world.clone().ok_or(BuildError::NoWorld)?;
        let doc = model::expand_placements(doc)?;
        let mut ctx = DocContext {
            doc: &doc,
            keys: HashMap::new(),
            interned: HashMap::new(),
            counts: HashMap::new(),
            shared: HashMap::new(),
        };
        if self.opts.optimization >= 2 && doc.compositions.contains_key(&world) {
                self.comp_key(&mut ctx, &world)?;
                count_refs(&mut ctx, &world);
        }
        let top = self.volume_node(&mut ctx, &world)?;
        let root = self.transform(&world, Matrix::identity(), top);
        self.add_root(root);
        Ok(root)
    }

    fn volume_node(&mut self, ctx: &mut DocContext, name: &str) -> Result<NodeId, BuildError> {
        let doc = ctx.doc;
        if let Some(sd) = doc.solids.get(name) {
            let solid = sd.numeric_shape()?;
            let geom = self.solid_geometry(name, &solid)?;
            let mat = sd.material.clone();
            let color = mat
                .as_deref()
                .and_then(|m| doc.material(m))
                .and_then(|m| m.color)
                .unwrap_or_else(|| self.opts.palette.color_for(mat.as_deref().unwrap_or(name)));
            let spec = AppearanceSpec {
                key: format!("material:{}", mat.as_deref().unwrap_or("")),
                color,
            };
            return Ok(self.shape(
                name,
                geom,
                &spec,
                VolumeInfo::Solid {
                    name: name.to_string(),
                    solid,
                    material: mat,
                },
                true,
            ));
        }
        if self.opts.optimization >= 2 {
            let key = self.comp_key(ctx, name)?;
            if ctx.counts.get(&key).copied().unwrap_or(0) >= 2 {
                let sid = match ctx.shared.get(&key) {
                    Some(&sid) => sid,
                    None => {
                        let root = self.composition(ctx, name)?;
                        self.shared.push(SharedGroup {
                            name: name.to_string(),
                            root,
                        });
                        let sid = SharedId(self.shared.len() as u32 - 1);
                        ctx.shared.insert(key, sid);
                        sid
                    }
                };
                return Ok(self.push(Node::SharedRef(sid)));
            }
        }
        self.composition(ctx, name)
    }

    fn composition(&mut self, ctx: &mut DocContext, name: &str) -> Result<NodeId, BuildError> {
        let c = &ctx.doc.compositions[name];
        let mut children = Vec::with_capacity(c.placements.len() + 1);
        if let Some(env) = &c.envelope {
            children.push(self.volume_node(ctx, env)?);
        }
        for (p, label) in c.placements.iter().zip(placement_labels(&c.placements)) {
            let (volume, m) = single(p)?;
            let child = self.volume_node(ctx, volume)?;
            children.push(self.transform(&label, m, child));
        }
        Ok(self.group(name, children))
    }

    /// Interned structural key of a composition subtree. The composition's
    /// own name is excluded; everything below it is included.
    fn comp_key(&mut self, ctx: &mut DocContext, name: &str) -> Result<u32, BuildError> {
        if let Some(&k) = ctx.keys.get(name) {
            return Ok(k);
        }
        let doc = ctx.doc;
        let c = &doc.compositions[name];
        let mut s = String::from("C(");
        if let Some(env) = &c.envelope {
            s.push_str(&self.leaf_key(ctx, env)?);
        }
        for (p, label) in c.placements.iter().zip(placement_labels(&c.placements)) {
            let (volume, m) = single(p)?;
            s.push(';');
            s.push_str(&label);
            s.push('@');
            for v in m.iter() {
                s.push_str(&format!("{},", round9(*v)));
            }
            s.push('=');
            let child = self.leaf_key(ctx, volume)?;
            s.push_str(&child);
        }
        s.push(')');
        let n = ctx.interned.len() as u32;
        let k = *ctx.interned.entry(s).or_insert(n);
        ctx.keys.insert(name.to_string(), k);
        Ok(k)
    }

    fn leaf_key(&mut self, ctx: &mut DocContext, volume: &str) -> Result<String, BuildError> {
        let doc = ctx.doc;
        Ok(match doc.solids.get(volume) {
            Some(sd) => format!(
                "S({}|{}|{})",
                sd.name,
                sd.material.as_deref().unwrap_or(""),
                solid_key(&sd.numeric_shape()?, self.opts.quality)
            ),
            None => format!("K{}", self.comp_key(ctx, volume)?),
        })
    }

    pub fn finish(mut self) -> SceneGraph {
        let roots = std::mem::take(&mut self.roots);
        let root = self.group("world", roots);
        let graph = SceneGraph {
            nodes: self.nodes,
            root,
            geometries: self.geometries,
            appearances: self.appearances,
            shared: self.shared,
            volumes: self.volumes,
            options: self.opts,
        };
        if graph.options.optimization >= 3 {
            flatten(graph)
        } else {
            graph
        }
    }
}

struct DocContext<'a> {
    doc: &'a GenericDocument,
    keys: HashMap<String, u32>,
    interned: HashMap<String, u32>,
    counts: HashMap<u32, usize>,
    shared: HashMap<u32, SharedId>,
}

/// Count how often each structural key is instantiated, descending into a
/// key only on its first occurrence since later ones become references.
fn count_refs(ctx: &mut DocContext, name: &str) {
    let k = ctx.keys[name];
    let c = ctx.counts.entry(k).or_insert(0);
    *c += 1;
    if *c > 1 {
        return;
    }
    let doc = ctx.doc;
    for p in &doc.compositions[name].placements {
        if doc.compositions.contains_key(p.volume()) {
            count_refs(ctx, p.volume());
        }
    }
}

fn single(p: &Placement) -> Result<(&str, Matrix), BuildError> {
    match p {
        Placement::Single {
            volume,
            translation,
            rotation,
        } => {
            let num = |v: &[model::Param; 3]| -> Result<[f64; 3], ModelError> {
                let mut out = [0.0; 3];
                for (o, p) in out.iter_mut().zip(v) {
                    *o = p.as_num().ok_or_else(|| ModelError::NotNumeric {
                        context: volume.clone(),
                        text: p.to_string(),
                    })?;
                }
                Ok(out)
            };
            Ok((volume, placement_matrix(num(translation)?, num(rotation)?)))
        }
        _ => unreachable!("placements expanded before building"),
    }
}

/// Transform labels of a composition's placements: the volume name, or
/// `name#k` when the composition places that volume more than once.
pub fn placement_labels(placements: &[Placement]) -> Vec<String> {
    let mut totals: HashMap<&str, usize> = HashMap::new();
    for p in placements {
        *totals.entry(p.volume()).or_default() += 1;
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    placements
        .iter()
        .map(|p| {
            let v = p.volume();
            if totals[v] == 1 {
                v.to_string()
            } else {
                let k = seen.entry(v).or_default();
                *k += 1;
                format!("{v}#{}", *k - 1)
            }
        })
        .collect()
}

fn round9(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

/// Structural key of a solid at a quality level: kind plus parameters
/// rounded to 1e-9 mm.
pub fn solid_key(s: &Solid, q: Quality) -> String {
    let mut k = format!("{}|q{}", s.kind(), q.level());
    for (name, v) in s.scalar_params() {
        k.push_str(&format!("|{name}={}", round9(*v)));
    }
    for zp in s.zplanes() {
        k.push_str(&format!("|z{},{},{}", round9(zp.z), round9(zp.rmin), round9(zp.rmax)));
    }
    k
}

fn batch_key(v: &VolumeInfo) -> String {
    match v {
        VolumeInfo::Solid { material, .. } => material.clone().unwrap_or_else(|| "none".into()),
        VolumeInfo::Hit { collection, .. } => format!("hits:{collection}"),
        VolumeInfo::Track { .. } => "tracks".into(),
        VolumeInfo::Batch { material, .. } => material.clone(),
    }
}

/// Build a scene from one document.
pub fn build(doc: &GenericDocument, opts: &BuildOptions) -> Result<SceneGraph, BuildError> {
    let mut b = SceneBuilder::new(*opts)?;
    b.add_document(doc)?;
    Ok(b.finish())
}

/// Merge world-transformed geometry per (material, geometry kind).
fn flatten(g: SceneGraph) -> SceneGraph {
    let mut batches: BTreeMap<(String, &'static str), (Geometry, Option<Appearance>, usize)> = BTreeMap::new();
    compiled::walk(&g, |shape, m, _path| {
        let geom = g.geometries[shape.geometry.0 as usize].transformed(m);
        let app = shape.appearance.map(|a| g.appearances[a.0 as usize]);
        match batches.entry((shape.material.clone(), geom.kind())) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let b = e.get_mut();
                b.0.append(&geom);
                b.2 += 1;
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert((geom, app, 1));
            }
        }
    });
    let mut out = SceneBuilder::new(g.options).expect("validated options");
    for ((material, kind), (geom, app, members)) in batches {
        let id = out.geometry(None, || geom);
        let spec = AppearanceSpec {
            key: format!("{material}:{kind}"),
            color: app.map(|a| [a.color[0], a.color[1], a.color[2]]).unwrap_or([0.7; 3]),
        };
        let label = if kind == "mesh" {
            format!("batch:{material}")
        } else {
            format!("batch:{material}:{kind}")
        };
        let shape = out.shape(
            &label,
            id,
            &spec,
            VolumeInfo::Batch {
                material: material.clone(),
                members,
            },
            kind == "mesh",
        );
        let t = out.transform(&label, Matrix::identity(), shape);
        out.add_root(t);
    }
    let roots = std::mem::take(&mut out.roots);
    let root = out.group("world", roots);
    SceneGraph {
        nodes: out.nodes,
        root,
        geometries: out.geometries,
        appearances: out.appearances,
        shared: out.shared,
        volumes: out.volumes,
        options: out.opts,
    }
}

impl fmt::Display for BuildOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "optimization={} quality={} interactivity={} graphical={}",
            self.optimization,
            self.quality.level(),
            self.effective_interactivity(),
            self.graphical
        )
    }
}
