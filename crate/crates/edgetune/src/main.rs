use std::process::ExitCode;

fn main() -> ExitCode {
    match edgetune::cli::main_with(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
