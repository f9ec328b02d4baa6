use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gtsim::run_main(std::env::args_os()))
}
