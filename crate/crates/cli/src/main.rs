use std::io;
use std::panic;
use std::process::ExitCode;

use geomodel_cli::{run, EXIT_INTERNAL};

fn main() -> ExitCode {
    let code = panic::catch_unwind(|| run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock()))
        .unwrap_or(EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
