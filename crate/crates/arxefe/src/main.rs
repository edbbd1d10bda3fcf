use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(arxefe::cli::main_entry())
}
