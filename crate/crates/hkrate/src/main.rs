use std::process::ExitCode;

fn main() -> ExitCode {
    hkrate::cli::main_with_args(std::env::args_os())
}
