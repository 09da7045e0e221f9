use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = qmf::cli::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(qmf::cli::EXIT_INPUT as u8);
    }
    let out = qmf::cli::run_command(std::env::args_os());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(out.code as u8)
}
