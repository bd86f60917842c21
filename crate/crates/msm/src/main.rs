use std::process::ExitCode;

fn main() -> ExitCode {
    msm::main_with_args(std::env::args_os())
}
