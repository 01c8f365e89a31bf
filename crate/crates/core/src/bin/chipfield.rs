use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use chipfield::config::{parse_config, Mode, RunConfig, CONFIG_REFERENCE};
use chipfield::run::run;

#[derive(Debug, Parser)]
#[command(
    name = "chipfield",
    version,
    about = "Ray-traced field map inside a flip-chip package",
    after_help = CONFIG_REFERENCE
)]
struct Cli {
    /// Configuration file (key = value with [section] headers)
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "emit_example_config"
    )]
    config: Option<PathBuf>,

    /// Overrides [run] mode
    #[arg(long, value_parser = ["map", "link", "compare"])]
    mode: Option<String>,

    /// Overrides [run] out_dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides [run] workers (0 = all cores, 1 = sequential)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Exit with status 3 when the geometric mean error exceeds X dB
    #[arg(long, value_name = "X")]
    fail_above_db: Option<f64>,

    /// Print a documented configuration with every default and exit
    #[arg(long)]
    emit_example_config: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    if cli.emit_example_config {
        print!("{}", RunConfig::example().to_config_string());
        return ExitCode::SUCCESS;
    }

    let path = cli.config.expect("clap enforces --config");
    let mut config = match parse_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(m) = cli.mode {
        config.mode = m.parse::<Mode>().expect("clap restricts the value");
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(t) = cli.fail_above_db {
        if t.is_nan() || t < 0.0 {
            eprintln!("error: --fail-above-db must be >= 0");
            return ExitCode::from(1);
        }
        config.fail_above_db = Some(t);
    }

    match run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.message.trim_end());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
