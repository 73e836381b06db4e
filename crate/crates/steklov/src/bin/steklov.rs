//! Thin batch driver over the library: parses a command (or `--config
//! file.json`), runs it, prints one PASS/FAIL line per check, and exits with
//! the code contract (0 all-pass, 1 tolerance failure, 2 usage, 3 numerical
//! breakdown).

use steklov::cli::{parse_config_args, run, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match parse_config_args(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            for check in &report.checks {
                let status = if check.pass { "PASS" } else { "FAIL" };
                println!(
                    "{status} {} (measured {:.6e}, tolerance {:.6e})",
                    check.name, check.measured, check.tolerance
                );
            }
            for file in &report.files {
                println!("wrote {file}");
            }
            std::process::exit(if report.all_pass() { 0 } else { 1 });
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical breakdown: {msg}");
            std::process::exit(3);
        }
    }
}
