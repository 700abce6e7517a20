use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(blindspot::cli::run(std::env::args()) as u8)
}
