use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(particle_windows::cli::main_with_args(std::env::args_os()))
}
