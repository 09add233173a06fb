use std::process::ExitCode;

use clap::Parser;
use solitonlab::report::to_json;
use solitonlab_cli::args::{Cli, Command};
use solitonlab_cli::run::{convergence_table, execute, rerun, status, summary_table, write_outputs};
use solitonlab_cli::{CliError, Mode};

const THREADS_VAR: &str = "SOLITONLAB_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Verify(args) => {
            let config = args.into_config(Mode::Verify)?;
            let doc = execute(&config);
            print!("{}", summary_table(&doc.reports));
            write_outputs(&doc)?;
            report_failures(&doc.reports);
            Ok(status(&doc))
        }
        Command::Converge(args) => {
            let config = args.into_config(Mode::Converge)?;
            let doc = execute(&config);
            print!("{}", convergence_table(&doc.reports));
            print!("{}", summary_table(&doc.reports));
            write_outputs(&doc)?;
            report_failures(&doc.reports);
            Ok(status(&doc))
        }
        Command::Rerun { report, out } => {
            let (doc, same) = rerun(&report)?;
            print!("{}", summary_table(&doc.reports));
            if let Some(out) = out {
                let text = to_json(&doc).expect("reports serialize");
                if out.exists() {
                    eprintln!("notice: overwriting {}", out.display());
                }
                std::fs::write(&out, text).map_err(|source| CliError::Io { path: out.clone(), source })?;
            }
            if same {
                println!("residuals reproduce {} exactly", report.display());
            } else {
                println!("residuals differ from {}", report.display());
            }
            report_failures(&doc.reports);
            Ok(if same { status(&doc) } else { 1 })
        }
    }
}

fn report_failures(reports: &[solitonlab::CheckReport]) {
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.check.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("failed checks: {}", failed.join(", "));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status() as u8)
        }
    }
}
