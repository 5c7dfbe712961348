use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use grasp_totp_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let status = match run(cli, &mut out) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.code()
        }
    };
    let _ = out.flush();
    ExitCode::from(status as u8)
}
