//! Batch command scripts: one command per line, `#` comments.
//!
//! ```text
//! quality 9
//! palette ATLANTIS
//! ptcut 5.0
//! hit-style sphere 5
//! color-mode kine
//! show test.xml
//! export wire out.json
//! ```
//!
//! Relative paths resolve against the script's directory. Options apply
//! to every later `export` or `stats`, which rebuild the scene from all
//! files shown so far.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use geomodel::events::{ColorMode, EventDocument, EventOptions};
use geomodel::model::GenericDocument;
use geomodel::scene::{BuildOptions, CompiledScene, HitStyle, Palette};
use geomodel::solids::Quality;

use crate::args::{Format, SourceArgs};
use crate::pipeline;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptCommand {
    SetQuality(Quality),
    SetOptimization(u8),
    SetInteractivity(u8),
    SetPalette(Palette),
    SetPtCut(f64),
    SetHitStyle(HitStyle),
    SetColorMode(ColorMode),
    SetParams(PathBuf),
    Show(PathBuf),
    Export(Format, PathBuf),
    Stats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ScriptError {}

fn parse_line(words: &[&str]) -> Result<ScriptCommand, String> {
    let one = |what: &str| match words {
        [_, v] => Ok(*v),
        _ => Err(format!("`{}` takes exactly one {what}", words[0])),
    };
    let number = |what: &str| -> Result<f64, String> {
        let v = one(what)?;
        v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"))
    };
    let level = |what: &str| -> Result<u8, String> {
        let v = one(what)?;
        v.parse::<u8>().map_err(|_| format!("`{v}` is not a level"))
    };
    Ok(match words[0] {
        "quality" => {
            let q = one("level")?;
            ScriptCommand::SetQuality(
                q.parse::<u32>()
                    .map_err(|_| format!("`{q}` is not a level"))
                    .and_then(|q| Quality::new(q).map_err(|e| e.to_string()))?,
            )
        }
        "optimization" => ScriptCommand::SetOptimization(level("level")?),
        "interactivity" => ScriptCommand::SetInteractivity(level("level")?),
        "palette" => ScriptCommand::SetPalette(one("name")?.parse()?),
        "ptcut" => {
            let v = number("value")?;
            if !(v >= 0.0) {
                return Err(format!("pt cut must be non-negative, got {v}"));
            }
            ScriptCommand::SetPtCut(v)
        }
        "hit-style" => ScriptCommand::SetHitStyle(
            pipeline::parse_hit_style(&words[1..].join(" ")).map_err(|e| e.to_string())?,
        ),
        "color-mode" => ScriptCommand::SetColorMode(one("mode")?.parse()?),
        "params" => ScriptCommand::SetParams(one("path")?.into()),
        "show" => ScriptCommand::Show(one("path")?.into()),
        "export" => match words {
            [_, f, p] => {
                let format = <Format as clap::ValueEnum>::from_str(f, true)
                    .map_err(|_| format!("unknown export format `{f}` (expected vrml, x3d, txt or wire)"))?;
                ScriptCommand::Export(format, p.into())
            }
            _ => return Err("`export` takes a format and an output path".into()),
        },
        "stats" if words.len() == 1 => ScriptCommand::Stats,
        "stats" => return Err("`stats` takes no arguments".into()),
        other => return Err(format!("unknown command `{other}`")),
    })
}

/// Parse a whole script before anything runs, so a typo on the last line
/// does not leave half the work done.
pub fn parse_script(text: &str) -> Result<Vec<(usize, ScriptCommand)>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let line = line.trim_end_matches(';');
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let cmd = parse_line(&words).map_err(|message| ScriptError { line: i + 1, message })?;
        out.push((i + 1, cmd));
    }
    Ok(out)
}

/// Options and shown files accumulated by a script.
pub struct ScriptContext {
    pub build: BuildOptions,
    pub event: EventOptions,
    pub detectors: Vec<GenericDocument>,
    pub events: Vec<EventDocument>,
    params: Option<PathBuf>,
    base: PathBuf,
}

impl ScriptContext {
    pub fn new(base: &Path) -> ScriptContext {
        ScriptContext {
            build: BuildOptions::default(),
            event: EventOptions::default(),
            detectors: Vec::new(),
            events: Vec::new(),
            params: None,
            base: base.to_path_buf(),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn scene(&self) -> Result<CompiledScene> {
        pipeline::assemble(&self.detectors, &self.events, &self.build, &self.event)
    }

    pub fn execute(&mut self, cmd: &ScriptCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
        match cmd {
            ScriptCommand::SetQuality(q) => self.build.quality = *q,
            ScriptCommand::SetOptimization(o) => {
                let mut b = self.build;
                b.optimization = *o;
                b.validate()?;
                self.build = b;
            }
            ScriptCommand::SetInteractivity(i) => {
                let mut b = self.build;
                b.interactivity = *i;
                b.validate()?;
                self.build = b;
            }
            ScriptCommand::SetPalette(p) => self.build.palette = *p,
            ScriptCommand::SetPtCut(v) => self.event.pt_cut = *v,
            ScriptCommand::SetHitStyle(h) => self.build.representations.hit = *h,
            ScriptCommand::SetColorMode(m) => self.event.color_mode = *m,
            ScriptCommand::SetParams(p) => self.params = Some(self.resolve(p)),
            ScriptCommand::Show(p) => {
                let path = self.resolve(p);
                let text = pipeline::read(&path)?;
                if pipeline::is_event_file(&text) {
                    let (ev, warnings) = pipeline::load_event(&path)?;
                    for w in warnings {
                        writeln!(err, "WARNING {}: {w}", path.display())?;
                    }
                    self.events.push(ev);
                } else {
                    let parsed = pipeline::load_document(&path)?;
                    for w in &parsed.warnings {
                        writeln!(err, "{}", w.render(&path.display().to_string(), &parsed.lines))?;
                    }
                    let sources = SourceArgs {
                        params: self.params.clone(),
                        connections: None,
                    };
                    let doc = pipeline::explicit(&parsed.document, &sources)
                        .with_context(|| format!("{}", path.display()))?;
                    self.detectors.push(doc);
                }
            }
            ScriptCommand::Export(f, p) => {
                let path = self.resolve(p);
                std::fs::write(&path, pipeline::export_text(&self.scene()?, *f))
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            ScriptCommand::Stats => write!(out, "{}", self.scene()?.stats())?,
        }
        Ok(())
    }
}

/// Run a script file; returns the final context so callers can serve it.
pub fn run_script(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<ScriptContext> {
    let text = pipeline::read(path)?;
    let commands = parse_script(&text).map_err(|e| anyhow!("{}:{}", path.display(), e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut ctx = ScriptContext::new(&base);
    for (line, cmd) in &commands {
        ctx.execute(cmd, out, err)
            .with_context(|| format!("{}:line {line}", path.display()))?;
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_display_script() {
        let cmds = parse_script(
            "quality 9\npalette ATLANTIS\nptcut 5.0\nhit-style sphere 5\ncolor-mode kine\nshow test.xml\nexport wire out.json\n",
        )
        .unwrap();
        let cmds: Vec<_> = cmds.into_iter().map(|(_, c)| c).collect();
        assert_eq!(cmds[0], ScriptCommand::SetQuality(Quality::new(9).unwrap()));
        assert_eq!(cmds[1], ScriptCommand::SetPalette(Palette::Atlantis));
        assert_eq!(cmds[2], ScriptCommand::SetPtCut(5.0));
        assert_eq!(cmds[3], ScriptCommand::SetHitStyle(HitStyle::Sphere { radius: 5.0 }));
        assert_eq!(cmds[4], ScriptCommand::SetColorMode(ColorMode::Kine));
        assert_eq!(cmds[6], ScriptCommand::Export(Format::Wire, "out.json".into()));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_script("# header\nquality 9\nqualty 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("qualty"));
        assert_eq!(parse_script("quality 12").unwrap_err().line, 1);
        assert_eq!(parse_script("export stl x").unwrap_err().line, 1);
        assert!(parse_script("\n# nothing\n").unwrap().is_empty());
    }
}
