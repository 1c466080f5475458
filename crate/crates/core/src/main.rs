use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(persona_eval::cli::main_with_args(std::env::args_os()))
}
