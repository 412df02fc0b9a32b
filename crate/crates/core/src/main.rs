use std::process::ExitCode;

fn main() -> ExitCode {
    let code = adavox::cli::run(std::env::args_os().collect(), &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
