use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use ecp::cli::{run, serve_address, Cli, Command};
use ecp::server::{serve, AppState};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Serve { workspace_dir, port, host, sim_workers } = cli.command {
        let workers = sim_workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
        let runtime = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        };
        let state = AppState::new(workspace_dir, workers);
        return match runtime.block_on(serve(serve_address(host, port), state)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    match run(cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = hint(&e.code) {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn hint(code: &str) -> Option<&'static str> {
    match code {
        "missing_indicator" => Some("rebuild the workspace with --indicators <file> --kind gini|emission_intensity"),
        "unknown_location" => Some("list locations in the workspace's specialization.csv"),
        _ => None,
    }
}
