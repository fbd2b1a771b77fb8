use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = io::stdin();
    let code = dxpath_cli::main_with(std::env::args_os().collect(), &mut stdin.lock(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
