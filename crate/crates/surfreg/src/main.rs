use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(surfreg::cli::run(std::env::args_os()) as u8)
}
