//! Command-line front end. Every subcommand is a composition of library
//! calls; see [`run`].

pub mod args;
pub mod pipeline;
pub mod script;
pub mod serve;

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Parser;
use geomodel::geom::{fmt_g9, Point, Vector};
use geomodel::model::{validate, Severity};
use geomodel::query::{locate, pick};

use args::{Cli, Command, TargetVersion};
use pipeline::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

fn emit(text: &str, out_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match out_path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => out.write_all(text.as_bytes()).context("cannot write output"),
    }
}

fn load_with_warnings(path: &Path, err: &mut dyn Write) -> Result<geomodel::model::GenericDocument> {
    let parsed = load_document(path)?;
    for w in &parsed.warnings {
        writeln!(err, "{}", w.render(&path.display().to_string(), &parsed.lines))?;
    }
    Ok(parsed.document)
}

/// Run with the given arguments (including the program name). Returns the
/// process exit status: 0 success, 1 user error, 2 internal error.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            } else {
                let _ = err.write_all(text.as_bytes());
                EXIT_USER
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USER
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Validate { file } => {
            let parsed = load_document(&file)?;
            let name = file.display().to_string();
            let mut diags = parsed.warnings.clone();
            diags.extend(validate(&parsed.document));
            let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
            for d in &diags {
                writeln!(err, "{}", d.render(&name, &parsed.lines))?;
            }
            writeln!(out, "{name}: {errors} error(s), {} warning(s)", diags.len() - errors)?;
            Ok(if errors == 0 { EXIT_OK } else { EXIT_USER })
        }
        Command::Fill { file, sources, out: o } => {
            let doc = load_with_warnings(&file, err)?;
            emit(&fill_document(&doc, &sources)?.to_xml(), o.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Expand { file, sources, out: o } => {
            let doc = load_with_warnings(&file, err)?;
            emit(&explicit(&doc, &sources)?.to_xml(), o.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Convert {
            file,
            to,
            sources,
            out: o,
        } => {
            let doc = load_with_warnings(&file, err)?;
            let converted = match to {
                TargetVersion::V4 => explicit(&doc, &sources)?,
                TargetVersion::V6 => geomodel::export::convert_v4_to_v6(&doc),
            };
            emit(&converted.to_xml(), o.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Build {
            file,
            sources,
            build,
            stats,
        } => {
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let scene = assemble(&[doc], &[], &build_options(&build)?, &Default::default())?;
            if stats {
                write!(out, "{}", scene.stats())?;
            } else {
                let s = scene.stats();
                writeln!(
                    out,
                    "built {} instances, {} distinct geometries, {} shared groups ({})",
                    s.instances,
                    s.distinct_geometries,
                    s.shared_groups,
                    scene.graph().options
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Stats { file, sources, build } => {
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let scene = assemble(&[doc], &[], &build_options(&build)?, &Default::default())?;
            write!(out, "{}", scene.stats())?;
            Ok(EXIT_OK)
        }
        Command::Export {
            file,
            format,
            sources,
            build,
            out: o,
        } => {
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let scene = assemble(&[doc], &[], &build_options(&build)?, &Default::default())?;
            emit(&export_text(&scene, format), o.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Locate {
            file,
            sources,
            build,
            point,
        } => {
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let scene = assemble(&[doc], &[], &build_options(&build)?, &Default::default())?;
            match locate(&scene, &Point::new(point[0], point[1], point[2]))? {
                Some(path) => writeln!(out, "{}", path.join("/"))?,
                None => writeln!(out, "OUTSIDE")?,
            }
            Ok(EXIT_OK)
        }
        Command::Pick {
            file,
            sources,
            build,
            ray,
        } => {
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let scene = assemble(&[doc], &[], &build_options(&build)?, &Default::default())?;
            let origin = Point::new(ray[0], ray[1], ray[2]);
            let dir = Vector::new(ray[3], ray[4], ray[5]);
            match pick(&scene, &origin, &dir)? {
                Some(h) => writeln!(
                    out,
                    "{} {} {} {} {}",
                    h.path.join("/"),
                    fmt_g9(h.t),
                    fmt_g9(h.point[0]),
                    fmt_g9(h.point[1]),
                    fmt_g9(h.point[2])
                )?,
                None => writeln!(out, "MISS")?,
            }
            Ok(EXIT_OK)
        }
        Command::Event {
            file,
            detector,
            sources,
            build,
            event,
            format,
            out: o,
        } => {
            let mut bo = build_options(&build)?;
            let eo = event_options(&event, &mut bo)?;
            let (ev, warnings) = load_event(&file)?;
            for w in warnings {
                writeln!(err, "WARNING {}: {w}", file.display())?;
            }
            let detectors = match detector {
                Some(d) => vec![explicit(&load_with_warnings(&d, err)?, &sources)?],
                None => Vec::new(),
            };
            let scene = assemble(&detectors, &[ev], &bo, &eo)?;
            match format {
                Some(f) => emit(&export_text(&scene, f), o.as_deref(), out)?,
                None => emit(&scene.stats().to_string(), o.as_deref(), out)?,
            }
            Ok(EXIT_OK)
        }
        Command::Script { file, serve: addr } => {
            let ctx = script::run_script(&file, out, err)?;
            if let Some(addr) = addr {
                serve::serve_blocking(ctx.scene()?, &addr, err)?;
            }
            Ok(EXIT_OK)
        }
        Command::Serve {
            file,
            event,
            sources,
            build,
            event_opts,
            addr,
        } => {
            let mut bo = build_options(&build)?;
            let eo = event_options(&event_opts, &mut bo)?;
            let doc = explicit(&load_with_warnings(&file, err)?, &sources)?;
            let events = match event {
                Some(e) => vec![load_event(&e)?.0],
                None => Vec::new(),
            };
            serve::serve_blocking(assemble(&[doc], &events, &bo, &eo)?, &addr, err)?;
            Ok(EXIT_OK)
        }
    }
}
