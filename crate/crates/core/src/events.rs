//! Event data: hits and truth tracks, track helices, and event scenes.
//!
//! The XML subset:
//!
//! ```xml
//! <Event run="1" event="42">
//!   <HitCollection name="Pixel">
//!     <hit id="1" x="10" y="0" z="5" energy="0.02" kine="3"/>
//!   </HitCollection>
//!   <TruthTracks>
//!     <track id="3" pt="12" phi0="30" eta="0.5" d0="0" z0="0" charge="-1" pdg="13"/>
//!   </TruthTracks>
//! </Event>
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{translation, Matrix, Point, Vector};
use crate::scene::{AppearanceSpec, BuildError, Geometry, HitStyle, NodeId, SceneBuilder, TrackStyle, VolumeInfo};
use crate::solids::{sweep_polyline, Solid};

/// pt [GeV] = 0.3 · B [T] · r [m].
pub const CURVATURE_CONSTANT: f64 = 0.3;
/// Upper bound on the number of turns drawn for a curling track.
pub const MAX_TURNS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("malformed event XML at {line}:{column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("line {line}: <{element}> lacks attribute `{attribute}`")]
    MissingAttribute {
        element: String,
        attribute: String,
        line: u32,
    },
    #[error("line {line}: <{element} {attribute}=\"{value}\"> is not a valid number")]
    BadValue {
        element: String,
        attribute: String,
        value: String,
        line: u32,
    },
    #[error("line {line}: track {id} has pt {pt}; pt must be positive")]
    BadPt { id: i64, pt: f64, line: u32 },
    #[error("line {line}: track {id} has charge {charge}; expected -1, 0 or 1")]
    BadCharge { id: i64, charge: i32, line: u32 },
    #[error("expected root element <Event>, found <{0}>")]
    WrongRoot(String),
    #[error("invalid event options: {0}")]
    Options(String),
    #[error("track {0} is charged but the field is zero; cannot draw a helix")]
    ZeroField(i64),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: i64,
    /// mm
    pub position: [f64; 3],
    /// GeV
    pub energy: f64,
    pub kine: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitCollection {
    pub name: String,
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrack {
    pub id: i64,
    /// GeV
    pub pt: f64,
    /// degrees
    pub phi0: f64,
    pub eta: f64,
    /// mm
    pub d0: f64,
    /// mm
    pub z0: f64,
    pub charge: i32,
    pub pdg: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventDocument {
    pub run: i64,
    pub event: i64,
    pub collections: Vec<HitCollection>,
    pub tracks: Vec<TruthTrack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    /// One palette color per hit collection.
    Collection,
    /// Palette color chosen by the hit's kine id (the track id for tracks).
    Kine,
}

impl FromStr for ColorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "collection" | "by-collection" => Ok(ColorMode::Collection),
            "kine" | "from-kine" => Ok(ColorMode::Kine),
            _ => Err(format!("unknown color mode `{s}` (expected collection or kine)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventOptions {
    /// GeV; tracks below are dropped.
    pub pt_cut: f64,
    pub color_mode: ColorMode,
    /// Solenoid field along z, tesla.
    pub bz: f64,
    /// Tracking cylinder radius, mm.
    pub rmax: f64,
    /// Tracking cylinder half length, mm.
    pub zmax: f64,
}

impl Default for EventOptions {
    fn default() -> Self {
        EventOptions {
            pt_cut: 0.0,
            color_mode: ColorMode::Collection,
            bz: 2.0,
            rmax: 1100.0,
            zmax: 3000.0,
        }
    }
}

impl EventOptions {
    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.pt_cut >= 0.0) {
            return Err(EventError::Options(format!("pt cut {} is negative", self.pt_cut)));
        }
        if !self.bz.is_finite() {
            return Err(EventError::Options("field must be finite".into()));
        }
        if !(self.rmax > 0.0 && self.zmax > 0.0 && self.rmax.is_finite() && self.zmax.is_finite()) {
            return Err(EventError::Options("tracking extent must be positive".into()));
        }
        Ok(())
    }
}

/// Parsed event plus warnings about skipped elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvent {
    pub event: EventDocument,
    pub warnings: Vec<String>,
}

struct Reader<'a> {
    doc: &'a roxmltree::Document<'a>,
}

impl Reader<'_> {
    fn line(&self, n: roxmltree::Node) -> u32 {
        self.doc.text_pos_at(n.range().start).row
    }

    fn raw<'n>(&self, n: roxmltree::Node<'n, '_>, attr: &str) -> Result<&'n str, EventError> {
        n.attribute(attr).ok_or_else(|| EventError::MissingAttribute {
            element: n.tag_name().name().to_string(),
            attribute: attr.to_string(),
            line: self.line(n),
        })
    }

    fn parse<T: FromStr>(&self, n: roxmltree::Node, attr: &str, default: Option<T>) -> Result<T, EventError> {
        let text = match (n.attribute(attr), default) {
            (None, Some(d)) => return Ok(d),
            (None, None) => self.raw(n, attr)?,
            (Some(t), _) => t,
        };
        text.trim().parse().map_err(|_| EventError::BadValue {
            element: n.tag_name().name().to_string(),
            attribute: attr.to_string(),
            value: text.to_string(),
            line: self.line(n),
        })
    }

    fn num(&self, n: roxmltree::Node, attr: &str, default: Option<f64>) -> Result<f64, EventError> {
        let v: f64 = self.parse(n, attr, default)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EventError::BadValue {
                element: n.tag_name().name().to_string(),
                attribute: attr.to_string(),
                value: v.to_string(),
                line: self.line(n),
            })
        }
    }
}

pub fn parse_event(xml: &str) -> Result<ParsedEvent, EventError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| {
        let p = e.pos();
        EventError::Xml {
            line: p.row,
            column: p.col,
            message: e.to_string(),
        }
    })?;
    let r = Reader { doc: &doc };
    let root = doc.root_element();
    if root.tag_name().name() != "Event" {
        return Err(EventError::WrongRoot(root.tag_name().name().to_string()));
    }
    let mut ev = EventDocument {
        run: r.parse(root, "run", Some(0))?,
        event: r.parse(root, "event", Some(0))?,
        ..EventDocument::default()
    };
    let mut warnings = Vec::new();
    let mut skip = |n: roxmltree::Node, r: &Reader| {
        warnings.push(format!(
            "line {}: unknown element <{}> skipped",
            r.line(n),
            n.tag_name().name()
        ))
    };
    for child in root.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "HitCollection" => {
                let mut coll = HitCollection {
                    name: r.raw(child, "name")?.to_string(),
                    hits: Vec::new(),
                };
                for h in child.children().filter(|n| n.is_element()) {
                    if h.tag_name().name() != "hit" {
                        skip(h, &r);
                        continue;
                    }
                    coll.hits.push(Hit {
                        id: r.parse(h, "id", None)?,
                        position: [r.num(h, "x", None)?, r.num(h, "y", None)?, r.num(h, "z", None)?],
                        energy: r.num(h, "energy", Some(0.0))?,
                        kine: r.parse(h, "kine", Some(0))?,
                    });
                }
                ev.collections.push(coll);
            }
            "TruthTracks" => {
                for t in child.children().filter(|n| n.is_element()) {
                    if t.tag_name().name() != "track" {
                        skip(t, &r);
                        continue;
                    }
                    let track = TruthTrack {
                        id: r.parse(t, "id", None)?,
                        pt: r.num(t, "pt", None)?,
                        phi0: r.num(t, "phi0", Some(0.0))?,
                        eta: r.num(t, "eta", Some(0.0))?,
                        d0: r.num(t, "d0", Some(0.0))?,
                        z0: r.num(t, "z0", Some(0.0))?,
                        charge: r.parse(t, "charge", None)?,
                        pdg: r.parse(t, "pdg", Some(0))?,
                    };
                    if !(track.pt > 0.0) {
                        return Err(EventError::BadPt {
                            id: track.id,
                            pt: track.pt,
                            line: r.line(t),
                        });
                    }
                    if track.charge.abs() > 1 {
                        return Err(EventError::BadCharge {
                            id: track.id,
                            charge: track.charge,
                            line: r.line(t),
                        });
                    }
                    ev.tracks.push(track);
                }
            }
            _ => skip(child, &r),
        }
    }
    Ok(ParsedEvent { event: ev, warnings })
}

/// Keep tracks with `pt >= pt_cut`; hits are untouched.
pub fn filter_tracks(ev: &EventDocument, pt_cut: f64) -> EventDocument {
    EventDocument {
        tracks: ev.tracks.iter().filter(|t| t.pt >= pt_cut).cloned().collect(),
        ..ev.clone()
    }
}

/// Transverse helix of a charged track, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelixParams {
    pub radius: f64,
    /// +1 turns counter-clockwise seen from +z.
    pub handedness: f64,
    pub center: [f64; 2],
    pub perigee: Point,
    pub phi0_rad: f64,
    /// dz per mm of transverse arc.
    pub dz_ds: f64,
}

impl HelixParams {
    pub fn new(t: &TruthTrack, bz: f64) -> Result<HelixParams, EventError> {
        if bz == 0.0 {
            return Err(EventError::ZeroField(t.id));
        }
        let q = f64::from(t.charge);
        let radius = 1000.0 * t.pt / (CURVATURE_CONSTANT * q.abs() * bz.abs());
        let h = -q.signum() * bz.signum();
        let phi = t.phi0.to_radians();
        let perigee = Point::new(-t.d0 * phi.sin(), t.d0 * phi.cos(), t.z0);
        Ok(HelixParams {
            radius,
            handedness: h,
            center: [perigee.x - h * radius * phi.sin(), perigee.y + h * radius * phi.cos()],
            perigee,
            phi0_rad: phi,
            dz_ds: t.eta.sinh(),
        })
    }

    /// Point after turning through `angle` radians from the perigee.
    pub fn at(&self, angle: f64) -> Point {
        let (h, r) = (self.handedness, self.radius);
        let phi = self.phi0_rad + h * angle;
        Point::new(
            self.center[0] + h * r * phi.sin(),
            self.center[1] - h * r * phi.cos(),
            self.perigee.z + r * angle * self.dz_ds,
        )
    }
}

fn inside(p: &Point, o: &EventOptions) -> bool {
    p.x.hypot(p.y) <= o.rmax && p.z.abs() <= o.zmax
}

/// Largest parameter in `[a, b]` still inside, by bisection; `a` is inside.
fn boundary(f: impl Fn(f64) -> Point, o: &EventOptions, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if inside(&f(m), o) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// Sample a track from its perigee until it leaves the tracking cylinder
/// (or after [`MAX_TURNS`]), with `nseg` samples per turn. The last point
/// lies on the cylinder when the track escapes. Neutral tracks are
/// straight lines.
pub fn track_to_polyline(t: &TruthTrack, opts: &EventOptions, nseg: usize) -> Result<Vec<Point>, EventError> {
    opts.validate()?;
    let nseg = nseg.max(3);
    if t.charge == 0 {
        let phi = t.phi0.to_radians();
        let start = Point::new(-t.d0 * phi.sin(), t.d0 * phi.cos(), t.z0);
        if !inside(&start, opts) {
            return Ok(vec![start]);
        }
        let dir = Vector::new(phi.cos(), phi.sin(), t.eta.sinh()).normalize();
        let f = |s: f64| start + dir * s;
        let reach = 2.0 * (opts.rmax + opts.zmax) + start.coords.norm();
        return Ok(vec![start, f(boundary(f, opts, 0.0, reach))]);
    }
    let hp = HelixParams::new(t, opts.bz)?;
    let step = 2.0 * PI / nseg as f64;
    let f = |a: f64| hp.at(a);
    let mut pts = vec![hp.perigee];
    if !inside(&hp.perigee, opts) {
        return Ok(pts);
    }
    let last = (MAX_TURNS * nseg as f64).round() as usize;
    for k in 1..=last {
        let a = k as f64 * step;
        let p = f(a);
        if !inside(&p, opts) {
            pts.push(f(boundary(f, opts, a - step, a)));
            break;
        }
        pts.push(p);
    }
    Ok(pts)
}

fn unique_labels(prefix: &str, ids: impl Iterator<Item = i64>) -> Vec<String> {
    let ids: Vec<i64> = ids.collect();
    let mut totals: HashMap<i64, usize> = HashMap::new();
    for id in &ids {
        *totals.entry(*id).or_default() += 1;
    }
    let mut seen: HashMap<i64, usize> = HashMap::new();
    ids.iter()
        .map(|id| {
            if totals[id] == 1 {
                format!("{prefix}{id}")
            } else {
                let k = seen.entry(*id).or_default();
                *k += 1;
                format!("{prefix}{id}#{}", *k - 1)
            }
        })
        .collect()
}

/// Add an event to a scene under a transform labelled `event`. Tracks
/// below the pt cut are dropped first. Paths look like
/// `[event, <collection>, hit:<id>]` and `[event, tracks, track:<id>]`.
pub fn build_event_scene(
    builder: &mut SceneBuilder,
    ev: &EventDocument,
    opts: &EventOptions,
) -> Result<NodeId, EventError> {
    opts.validate()?;
    let ev = filter_tracks(ev, opts.pt_cut);
    let bo = *builder.options();
    let colors = bo.palette.colors();
    let pick = |i: i64| colors[i.rem_euclid(colors.len() as i64) as usize];
    let spec = |rgb: [f64; 3]| AppearanceSpec {
        key: format!("rgb:{},{},{}", rgb[0], rgb[1], rgb[2]),
        color: rgb,
    };
    let mut children = Vec::new();
    for (ci, coll) in ev.collections.iter().enumerate() {
        let mut hits = Vec::new();
        let labels = unique_labels("hit:", coll.hits.iter().map(|h| h.id));
        for (hit, label) in coll.hits.iter().zip(labels) {
            let geom = match bo.representations.hit {
                HitStyle::Point => builder.geometry(Some("hit:point"), || Geometry::Points(vec![Point::origin()])),
                HitStyle::Sphere { radius } => {
                    let sphere = Solid::Sphere {
                        rmin: 0.0,
                        rmax: radius,
                        theta0: 0.0,
                        dtheta: 180.0,
                        phi0: 0.0,
                        dphi: 360.0,
                    };
                    builder.solid_geometry("hit", &sphere)?
                }
            };
            let color = match opts.color_mode {
                ColorMode::Collection => pick(ci as i64),
                ColorMode::Kine => pick(hit.kine),
            };
            let info = VolumeInfo::Hit {
                collection: coll.name.clone(),
                id: hit.id,
                energy: hit.energy,
                kine: hit.kine,
            };
            let shape = builder.shape(&label, geom, &spec(color), info, true);
            hits.push(builder.transform(&label, translation(hit.position), shape));
        }
        let g = builder.group(&coll.name, hits);
        children.push(builder.transform(&coll.name, Matrix::identity(), g));
    }
    if !ev.tracks.is_empty() {
        let nseg = bo.quality.segments();
        let mut tracks = Vec::new();
        let labels = unique_labels("track:", ev.tracks.iter().map(|t| t.id));
        for (t, label) in ev.tracks.iter().zip(labels) {
            let pts = track_to_polyline(t, opts, nseg)?;
            let geometry = match bo.representations.track {
                TrackStyle::Tube { radius } => sweep_polyline(&pts, radius, nseg).map(Geometry::Mesh),
                TrackStyle::Polyline => None,
            }
            .unwrap_or(Geometry::Lines(vec![pts]));
            let geom = builder.geometry(None, || geometry);
            let color = match opts.color_mode {
                ColorMode::Collection => pick(ev.collections.len() as i64),
                ColorMode::Kine => pick(t.id),
            };
            let info = VolumeInfo::Track {
                id: t.id,
                pt: t.pt,
                phi0: t.phi0,
                eta: t.eta,
                d0: t.d0,
                z0: t.z0,
                charge: t.charge,
                pdg: t.pdg,
            };
            let shape = builder.shape(&label, geom, &spec(color), info, true);
            tracks.push(builder.transform(&label, Matrix::identity(), shape));
        }
        let g = builder.group("tracks", tracks);
        children.push(builder.transform("tracks", Matrix::identity(), g));
    }
    let g = builder.group("event", children);
    let root = builder.transform("event", Matrix::identity(), g);
    builder.add_root(root);
    Ok(root)
}
