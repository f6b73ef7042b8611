//! Library compositions behind the subcommands and script commands.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use geomodel::events::{build_event_scene, parse_event, ColorMode, EventDocument, EventOptions};
use geomodel::export::{convert_v6_to_v4, export, ExportFormat};
use geomodel::model::{parse_document, Definition, GenericDocument, Parsed};
use geomodel::paramfill::{fill, parse_connections, ConnectionConfig, FileSource, ParameterSource, SourceSpec};
use geomodel::scene::{compile, BuildOptions, CompiledScene, HitStyle, Palette, SceneBuilder, TrackStyle};
use geomodel::solids::Quality;

use crate::args::{BuildArgs, EventArgs, Format, SourceArgs};

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_document(path: &Path) -> Result<Parsed> {
    parse_document(&read(path)?).with_context(|| format!("{}", path.display()))
}

pub fn load_event(path: &Path) -> Result<(EventDocument, Vec<String>)> {
    let p = parse_event(&read(path)?).with_context(|| format!("{}", path.display()))?;
    Ok((p.event, p.warnings))
}

/// True when the file's root element is `<Event>`.
pub fn is_event_file(text: &str) -> bool {
    roxmltree::Document::parse(text).is_ok_and(|d| d.root_element().has_tag_name("Event"))
}

fn connections_used(doc: &GenericDocument) -> BTreeSet<String> {
    doc.definitions
        .iter()
        .filter_map(|d| match d {
            Definition::Connected(r) => Some(r.connection.clone()),
            _ => None,
        })
        .collect()
}

/// Parameter sources for a document.
pub struct Sources {
    pub config: ConnectionConfig,
    stores: HashMap<String, FileSource>,
}

impl Sources {
    pub fn as_map(&self) -> HashMap<String, &dyn ParameterSource> {
        self.stores
            .iter()
            .map(|(k, v)| (k.clone(), v as &dyn ParameterSource))
            .collect()
    }
}

/// With `--params` alone, the file answers for every connection the
/// document names. With `--connections`, file-kind connections are opened
/// relative to the config; `--params` then overrides all of them.
pub fn sources(doc: &GenericDocument, args: &SourceArgs) -> Result<Sources> {
    let mut config = match &args.connections {
        Some(p) => parse_connections(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => ConnectionConfig::default(),
    };
    let mut stores = HashMap::new();
    if let Some(params) = &args.params {
        let src = FileSource::open(params)?;
        if args.connections.is_none() {
            for c in connections_used(doc) {
                config.connections.insert(
                    c,
                    SourceSpec {
                        kind: "file".into(),
                        location: params.display().to_string(),
                    },
                );
            }
        }
        for name in config.connections.keys() {
            stores.insert(name.clone(), src.clone());
        }
    } else if let Some(cfg_path) = &args.connections {
        let base = cfg_path.parent().map(Path::to_path_buf).unwrap_or_default();
        for (name, spec) in &config.connections {
            if spec.kind == "file" {
                let loc = PathBuf::from(&spec.location);
                let loc = if loc.is_absolute() { loc } else { base.join(loc) };
                stores.insert(name.clone(), FileSource::open(&loc)?);
            }
        }
    }
    Ok(Sources { config, stores })
}

pub fn fill_document(doc: &GenericDocument, args: &SourceArgs) -> Result<GenericDocument> {
    let s = sources(doc, args)?;
    Ok(fill(doc, &s.config, &s.as_map())?)
}

/// Explicit (v4) form of a document, ready to build.
pub fn explicit(doc: &GenericDocument, args: &SourceArgs) -> Result<GenericDocument> {
    let s = sources(doc, args)?;
    Ok(convert_v6_to_v4(doc, &s.config, &s.as_map())?)
}

pub fn build_options(a: &BuildArgs) -> Result<BuildOptions> {
    let opts = BuildOptions {
        graphical: a.graphical,
        optimization: a.optimization,
        quality: Quality::new(a.quality)?,
        interactivity: a.interactivity,
        palette: a.palette.parse::<Palette>().map_err(|e| anyhow!(e))?,
        ..BuildOptions::default()
    };
    opts.validate()?;
    Ok(opts)
}

pub fn parse_hit_style(s: &str) -> Result<HitStyle> {
    let mut parts = s.split([':', ' ']).filter(|p| !p.is_empty());
    match (parts.next(), parts.next(), parts.next()) {
        (Some("point"), None, _) => Ok(HitStyle::Point),
        (Some("sphere"), Some(r), None) => {
            let radius: f64 = r.parse().with_context(|| format!("bad sphere radius `{r}`"))?;
            if !(radius > 0.0 && radius.is_finite()) {
                bail!("sphere radius must be positive, got {radius}");
            }
            Ok(HitStyle::Sphere { radius })
        }
        _ => bail!("hit style must be `point` or `sphere <radius>`, got `{s}`"),
    }
}

/// Event options plus the representation choices that live in the build
/// options.
pub fn event_options(a: &EventArgs, build: &mut BuildOptions) -> Result<EventOptions> {
    build.representations.hit = parse_hit_style(&a.hit_style)?;
    if let Some(r) = a.track_tube {
        if !(r > 0.0) {
            bail!("track tube radius must be positive");
        }
        build.representations.track = TrackStyle::Tube { radius: r };
    }
    let opts = EventOptions {
        pt_cut: a.ptcut,
        color_mode: a.color_mode.parse::<ColorMode>().map_err(|e| anyhow!(e))?,
        bz: a.bz,
        rmax: a.rmax,
        zmax: a.zmax,
    };
    opts.validate()?;
    Ok(opts)
}

/// Build one scene holding every detector and event, in order.
pub fn assemble(
    detectors: &[GenericDocument],
    events: &[EventDocument],
    build: &BuildOptions,
    event: &EventOptions,
) -> Result<CompiledScene> {
    let mut b = SceneBuilder::new(*build)?;
    for d in detectors {
        b.add_document(d)?;
    }
    for e in events {
        build_event_scene(&mut b, e, event)?;
    }
    Ok(compile(b.finish()))
}

pub fn export_format(f: Format) -> ExportFormat {
    match f {
        Format::Vrml => ExportFormat::Vrml,
        Format::X3d => ExportFormat::X3d,
        Format::Txt => ExportFormat::Txt,
        Format::Wire => ExportFormat::Wire,
    }
}

pub fn export_text(scene: &CompiledScene, f: Format) -> String {
    export(scene, export_format(f))
}
