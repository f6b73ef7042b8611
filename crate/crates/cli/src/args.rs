use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "geomodel", version, about = "Detector geometry pipeline: validate, expand, build, query and export")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where connected parameters come from.
#[derive(Debug, Clone, Default, Args)]
pub struct SourceArgs {
    /// Parameter file (`name value` lines). Without --connections it
    /// serves every connection the document names.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Connection config (XSQLConfig XML).
    #[arg(long)]
    pub connections: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Optimization level 0..=3.
    #[arg(long = "opt", default_value_t = 1)]
    pub optimization: u8,
    /// Tessellation quality 0..=9.
    #[arg(long, default_value_t = 3)]
    pub quality: u32,
    /// Requested interactivity 0..=2 (capped by the optimization level).
    #[arg(long = "inter", default_value_t = 1)]
    pub interactivity: u8,
    /// Attach appearances (`--graphical false` to build geometry only).
    #[arg(long, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub graphical: bool,
    /// Color palette: default or atlantis.
    #[arg(long, default_value = "default")]
    pub palette: String,
}

#[derive(Debug, Clone, Args)]
pub struct EventArgs {
    /// Drop tracks with pt below this value (GeV).
    #[arg(long, default_value_t = 0.0)]
    pub ptcut: f64,
    /// `point` or `sphere:<radius mm>`.
    #[arg(long, default_value = "point")]
    pub hit_style: String,
    /// `collection` or `kine`.
    #[arg(long, default_value = "collection")]
    pub color_mode: String,
    /// Solenoid field along z, tesla.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub bz: f64,
    /// Tracking cylinder radius, mm.
    #[arg(long, default_value_t = 1100.0)]
    pub rmax: f64,
    /// Tracking cylinder half length, mm.
    #[arg(long, default_value_t = 3000.0)]
    pub zmax: f64,
    /// Draw tracks as tubes of this radius (mm) instead of polylines.
    #[arg(long)]
    pub track_tube: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Vrml,
    X3d,
    Txt,
    Wire,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetVersion {
    V4,
    V6,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report dangling references, collisions, cycles and other problems.
    Validate { file: PathBuf },
    /// Replace connected variables by values from the parameter sources.
    Fill {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill, evaluate formulas and unroll placements into an explicit document.
    Expand {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert between the explicit (v4) and formula (v6) dialects.
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: TargetVersion,
        #[command(flatten)]
        sources: SourceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and compile a scene; prints a summary or the statistics.
    Build {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long)]
        stats: bool,
    },
    /// Print scene statistics.
    Stats {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Export a scene as VRML, X3D, TXT or wire JSON.
    Export {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the deepest volume containing a point, or OUTSIDE.
    Locate {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        /// x y z in mm.
        #[arg(num_args = 3, required = true, allow_negative_numbers = true)]
        point: Vec<f64>,
    },
    /// Cast a ray and print the nearest hit (`path t x y z`) or MISS.
    Pick {
        file: PathBuf,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        /// ox oy oz dx dy dz
        #[arg(num_args = 6, required = true, allow_negative_numbers = true)]
        ray: Vec<f64>,
    },
    /// Build an event scene, optionally together with a detector.
    Event {
        file: PathBuf,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        #[command(flatten)]
        event: EventArgs,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch command script.
    Script {
        file: PathBuf,
        /// Serve the resulting scene at HOST:PORT afterwards.
        #[arg(long = "serve")]
        serve: Option<String>,
    },
    /// Serve a scene over HTTP for the viewer.
    Serve {
        file: PathBuf,
        #[arg(long)]
        event: Option<PathBuf>,
        #[command(flatten)]
        sources: SourceArgs,
        #[command(flatten)]
        build: BuildArgs,
        #[command(flatten)]
        event_opts: EventArgs,
        #[arg(long = "serve", default_value = "127.0.0.1:8080")]
        addr: String,
    },
}
