use std::io::Write;
use std::process::ExitCode;

use deepemo::cli::{run, Outcome};

fn main() -> ExitCode {
    let mut out = std::io::stdout().lock();
    match run(std::env::args_os(), &mut out) {
        Outcome::Done => ExitCode::SUCCESS,
        Outcome::Info(e) => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Outcome::Usage(e) => {
            let _ = e.print();
            ExitCode::from(1)
        }
        Outcome::Failed(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
