use std::process::ExitCode;

fn main() -> ExitCode {
    match splatrack::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(splatrack::CliError::Usage(message)) => {
            eprint!("{message}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("splatrack: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
